"""Corpus integrity, differential testing, reports, and the CLI surface."""

import json
import subprocess
import sys

import pytest

from klift import formula as F
from klift.cli import main as cli_main
from klift.corpus import LiftOptions, corpus_dir, lift_path, load_corpus, run_corpus
from klift.difftest import differential_test
from klift.report import render_figure, render_table, report_csv, report_json
from klift.synth import SynthConfig


def test_corpus_inventory(corpus_entries):
    names = {e.name for e in corpus_entries}
    required = {"add", "sub", "mul", "div", "neg", "reciprocal", "zeros", "exp", "log",
                "sin", "abs", "rsqrt", "tanh", "sum", "max", "relu", "leakyrelu",
                "squarerelu", "sigmoid", "silu", "softmax", "logsoftmax", "silumul"}
    assert required <= names
    assert {"matmul", "attention", "layernorm"} <= names
    assert len(names) >= 16


def test_every_kernel_parses_and_goldens_parse(corpus_entries, kernels):
    for entry in corpus_entries:
        assert entry.name in kernels  # parsed by the fixture
        if entry.golden is not None:
            F.parse_formula(entry.golden)  # goldens parse as formulas


def test_differential_add_exact(kernels, synth_results):
    mod, env, spec = kernels["add"]
    res = differential_test(mod, synth_results["add"].formula, env, spec, trials=100)
    assert res.passed and res.trials == 100
    assert res.max_rel_error == 0.0  # bit-identical computation


def test_differential_softmax_vs_simplified(kernels):
    from klift.simplify import simplify

    mod, env, spec = kernels["softmax"]
    dims = {t.name: t.dims for t in spec.inputs}
    simplified = simplify(F.parse_formula("exp(x + -max(x)) / sum(exp(x + -max(x)))"), dims=dims)
    res = differential_test(mod, simplified, env, spec, trials=100, tol=1e-5)
    assert res.passed  # destabilized form may differ in the last bits only


def test_differential_negative_control(kernels):
    mod, env, spec = kernels["add"]
    wrong = F.parse_formula("x1 - x2")
    res = differential_test(mod, wrong, env, spec, trials=50)
    assert not res.passed
    assert res.max_rel_error > 0.5  # error around 1 for corrupted golden


def test_differential_domain_retry(kernels, synth_results):
    mod, env, spec = kernels["log"]
    # default range includes negatives: retries shift samples until in-domain or skip
    res = differential_test(mod, synth_results["log"].formula, env, spec,
                            trials=20, domains={"x": [0.5, 2.5]})
    assert res.passed and res.skipped == 0


def test_lift_pipeline_softmax():
    report = lift_path(str(corpus_dir() / "softmax.klift"))
    assert report.synthesis.ok
    assert report.verification.verdict == "verified"
    assert report.simplified == "exp(x) / sum(exp(x))"
    assert report.differential.passed


def test_lift_degrades_gracefully_on_parse_error(tmp_path):
    bad = tmp_path / "bad.klift"
    bad.write_text("kernel nope(", encoding="utf-8")
    report = lift_path(str(bad))
    assert not report.parse_ok
    assert report.synthesis.ok is False
    assert report.verification.verdict == "skipped"


def test_golden_agreement(full_reports, corpus_entries):
    """Synthesized-then-simplified formulas are alpha-equivalent to goldens."""
    by_name = {r.kernel: r for r in full_reports}
    for entry in corpus_entries:
        if entry.golden is None:
            continue
        r = by_name[entry.name]
        assert r.synthesis.ok, entry.name
        got = F.parse_formula(r.simplified)
        want = F.parse_formula(entry.golden)
        assert F.equivalent_form(got, want), (entry.name, r.simplified, entry.golden)


def test_verify_expectations(full_reports, corpus_entries):
    by_name = {r.kernel: r for r in full_reports}
    for entry in corpus_entries:
        verdict = by_name[entry.name].verification.verdict
        if entry.expect_verify == "verified":
            assert verdict == "verified", entry.name
        else:
            assert verdict in ("verified", "unknown"), entry.name


def test_corpus_determinism():
    """Two runs produce identical reports except wall times."""
    opts = LiftOptions(synth=SynthConfig(time_budget=30), trials=20)
    names = ["add", "zeros", "relu", "softmax"]
    a = [r.to_dict() for r in run_corpus(opts, kernels=names)]
    b = [r.to_dict() for r in run_corpus(opts, kernels=names)]

    def strip_times(doc):
        for r in doc:
            r["synthesis"]["time_s"] = None
            r["verification"]["time_s"] = None
            r["verification"]["per_vc"] = [
                {k: v for k, v in vc.items() if k != "time_s"}
                for vc in r["verification"]["per_vc"]
            ]
        return doc

    assert strip_times(a) == strip_times(b)


def test_parallel_corpus_matches_sequential():
    opts = LiftOptions(synth=SynthConfig(time_budget=30), trials=10, verify=False)
    names = ["add", "neg", "relu"]
    seq = [r.to_dict()["synthesis"]["formula"] for r in run_corpus(opts, kernels=names)]
    par = [r.to_dict()["synthesis"]["formula"] for r in run_corpus(opts, kernels=names, jobs=2)]
    assert seq == par


def test_report_formats(full_reports, tmp_path):
    text = render_table(full_reports)
    assert "softmax" in text and "synthesized" in text
    doc = json.loads(report_json(full_reports))
    assert doc["summary"]["total"] == len(full_reports)
    assert {"kernel", "synthesis", "verification", "simplified", "differential"} <= set(
        doc["kernels"][0].keys()
    )
    csv_text = report_csv(full_reports)
    assert csv_text.splitlines()[0] == "kernel,S,V,time_s,programs,formula"
    png = tmp_path / "report.png"
    render_figure(full_reports, str(png))
    assert png.stat().st_size > 1000


# --- CLI surface ---

def test_cli_lift_exit_codes(tmp_path, capsys):
    rc = cli_main(["lift", str(corpus_dir() / "add.klift"), "--trials", "10"])
    assert rc == 0
    capsys.readouterr()

    bad = tmp_path / "broken.klift"
    bad.write_text("kernel broken(y: out real[4]) grid(1) block(4) {\n    store(y, q)\n}",
                   encoding="utf-8")
    rc = cli_main(["lift", str(bad)])
    assert rc == 3
    capsys.readouterr()


def test_cli_lift_synth_failure_exit_code(tmp_path, capsys):
    rc = cli_main(["lift", str(corpus_dir() / "softmax.klift"),
                   "--no-topdown", "--timeout", "3", "--no-verify", "--trials", "1"])
    capsys.readouterr()
    assert rc == 2


def test_cli_lift_json(capsys):
    rc = cli_main(["lift", str(corpus_dir() / "relu.klift"), "--json", "--trials", "10"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["synthesis"]["formula"] == "ifpos(x, x, 0)"
    assert doc["verification"]["verdict"] == "verified"


def test_cli_simplify(tmp_path, capsys):
    path = tmp_path / "f.txt"
    path.write_text("exp(x + -max(x)) / sum(exp(x + -max(x)))", encoding="utf-8")
    rc = cli_main(["simplify", str(path), "--dims", "x=2,4"])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "exp(x) / sum(exp(x))"


def test_console_script_installed():
    out = subprocess.run(["klift", "--help"], stdout=subprocess.PIPE, check=True)
    assert b"lift" in out.stdout
    smoke = subprocess.run(["klift-smt"], input=b"(assert false)(check-sat)",
                           stdout=subprocess.PIPE, check=True)
    assert smoke.stdout.strip() == b"unsat"


def test_cli_corpus_run_writes_reports(tmp_path, capsys):
    rc = cli_main(["corpus", "run", "--kernels", "add,relu", "--out", str(tmp_path),
                   "--trials", "10"])
    assert rc == 0
    capsys.readouterr()
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.csv").exists()
    assert (tmp_path / "report.png").exists()
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["summary"]["synthesized"] == 2
