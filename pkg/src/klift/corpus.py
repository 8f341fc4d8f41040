"""The operator corpus and the end-to-end lift pipeline."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import formula as F
from . import kernel as K
from .difftest import differential_test
from .executor import default_shape, execute, resolve_shapes
from .interp import ExecError
from .report import DiffReport, LiftReport, SynthReport, VerifyReport
from .simplify import simplify
from .smt.backend import Backend
from .synth import SynthConfig, Synthesizer
from .verifier import verify


@dataclass
class LiftOptions:
    synth: SynthConfig = field(default_factory=SynthConfig)
    verify: bool = True
    use_pattern: bool = True
    simplify: bool = True
    trials: int = 100
    tol: float = 1e-5
    solver: str | None = None
    solver_timeout: float = 30.0
    artifacts_dir: str | None = None
    domains: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    path: str
    golden: str | None
    expect_verify: str  # verified | verified_or_unknown
    counts_toward_floor: bool
    domains: dict
    note: str = ""


def corpus_dir() -> Path:
    return Path(str(resources.files("klift").joinpath("kernels")))


def load_corpus() -> list[CorpusEntry]:
    meta = json.loads(corpus_dir().joinpath("golden.json").read_text())
    entries = []
    for name in sorted(meta):
        info = meta[name]
        path = corpus_dir() / f"{name}.klift"
        entries.append(
            CorpusEntry(
                name=name,
                path=str(path),
                golden=info.get("golden"),
                expect_verify=info.get("verify", "verified"),
                counts_toward_floor=info.get("floor", True),
                domains=info.get("domains", {}),
                note=info.get("note", ""),
            )
        )
    return entries


def lift_source(text: str, name: str, opts: LiftOptions | None = None) -> LiftReport:
    opts = opts or LiftOptions()
    report = LiftReport(kernel=name, source=name)
    try:
        mod = K.parse_kernel(text, name)
    except K.KernelError as e:
        report.parse_ok = False
        report.parse_error = str(e)
        return report
    report.kernel = mod.name

    try:
        env = default_shape(mod) if not opts.scalars else resolve_shapes(mod, opts.scalars)
        spec = execute(mod, env)
    except (ExecError, ValueError) as e:
        report.synthesis.error = f"symbolic execution failed: {e}"
        return report

    backend = Backend(solver=opts.solver, timeout=opts.solver_timeout,
                      artifacts_dir=opts.artifacts_dir)
    cfg = SynthConfig(**{**opts.synth.__dict__})
    cfg.solver = opts.solver
    cfg.solver_timeout = opts.solver_timeout
    result = Synthesizer(spec, cfg, backend=backend).synthesize()
    report.synthesis = SynthReport(
        ok=result.ok,
        formula=F.print_formula(result.formula) if result.ok else None,
        time_s=result.elapsed,
        phase=result.phase,
        programs_enumerated=result.stats.programs_enumerated,
        candidates_checked=result.stats.candidates_checked,
        pruned_type=result.stats.pruned_type,
        pruned_value=result.stats.pruned_value,
        error=result.failure,
    )
    if not result.ok:
        return report

    if opts.verify:
        t0 = time.monotonic()
        outcome = verify(mod, result.formula, env, spec, backend,
                         use_pattern=opts.use_pattern)
        report.verification = VerifyReport(
            verdict=outcome.verdict,
            reason=outcome.reason,
            invariant=str(outcome.invariant) if outcome.invariant else None,
            pattern=outcome.pattern,
            per_vc=[{"name": o.name, "status": o.status, "time_s": round(o.wall, 4)}
                    for o in outcome.vcs],
            time_s=time.monotonic() - t0,
        )

    if opts.simplify:
        dims = {t.name: t.dims for t in spec.inputs}
        try:
            simplified = simplify(result.formula, dims=dims, validate=True)
            report.simplified = F.print_formula(simplified)
            report.simplified_latex = F.to_latex(simplified)
        except Exception as e:  # simplification must never lose the lift
            report.simplified = F.print_formula(result.formula)
            report.verification.reason += f" (simplifier error: {e})"

    diff = differential_test(mod, result.formula, env, spec,
                             trials=opts.trials, tol=opts.tol, domains=opts.domains)
    report.differential = DiffReport(diff.passed, diff.trials, diff.skipped,
                                     diff.max_rel_error, diff.note)
    return report


def lift_path(path: str, opts: LiftOptions | None = None) -> LiftReport:
    text = Path(path).read_text(encoding="utf-8")
    name = Path(path).stem
    return lift_source(text, name, opts)


def lift_entry(entry: CorpusEntry, opts: LiftOptions) -> LiftReport:
    merged = LiftOptions(**{**opts.__dict__})
    merged.domains = dict(entry.domains)
    merged.synth = SynthConfig(**{**opts.synth.__dict__})
    return lift_path(entry.path, merged)


def run_corpus(opts: LiftOptions | None = None, kernels: list[str] | None = None,
               jobs: int = 1) -> list[LiftReport]:
    opts = opts or LiftOptions()
    entries = [e for e in load_corpus() if kernels is None or e.name in kernels]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(e.name, pool.submit(lift_entry, e, opts)) for e in entries]
            by_name = {name: fut.result() for name, fut in futures}
        return [by_name[e.name] for e in entries]
    return [lift_entry(e, opts) for e in entries]
