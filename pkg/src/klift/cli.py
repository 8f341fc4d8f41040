"""klift command line: lift kernels, run the corpus, simplify formulas."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formula as F
from .corpus import LiftOptions, lift_path, run_corpus
from .report import render_figure, render_table, report_csv, report_json
from .simplify import simplify
from .synth import SynthConfig

EXIT_OK = 0
EXIT_SYNTH_FAILURE = 2
EXIT_PARSE_ERROR = 3


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--timeout", type=float, default=60.0,
                   help="synthesis time budget per kernel (seconds)")
    p.add_argument("--solver", default=None,
                   help="SMT solver command (default: bundled klift-smt; also KLIFT_SOLVER)")
    p.add_argument("--solver-timeout", type=float, default=30.0)
    p.add_argument("--no-verify", action="store_true", help="skip verification")
    p.add_argument("--no-topdown", action="store_true",
                   help="ablation: bottom-up enumeration only")
    p.add_argument("--no-prune", action="store_true",
                   help="ablation: disable type and value pruning")
    p.add_argument("--no-verify-pattern", action="store_true",
                   help="ablation: template-only invariants without effect abstraction")
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--trials", type=int, default=100, help="differential test trials")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--artifacts", default=None, help="directory for emitted SMT scripts")


def _options(args) -> LiftOptions:
    return LiftOptions(
        synth=SynthConfig(
            max_depth=args.max_depth,
            time_budget=args.timeout,
            enable_topdown=not args.no_topdown,
            enable_value_prune=not args.no_prune,
            enable_type_prune=not args.no_prune,
        ),
        verify=not args.no_verify,
        use_pattern=not args.no_verify_pattern,
        trials=args.trials,
        tol=args.tol,
        solver=args.solver,
        solver_timeout=args.solver_timeout,
        artifacts_dir=args.artifacts,
    )


def cmd_lift(args) -> int:
    if not Path(args.file).exists():
        print(f"error: no such file {args.file}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    report = lift_path(args.file, _options(args))
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(render_table([report]))
        if not report.parse_ok:
            print(report.parse_error, file=sys.stderr)
    if not report.parse_ok:
        return EXIT_PARSE_ERROR
    return EXIT_OK if report.synthesis.ok else EXIT_SYNTH_FAILURE


def cmd_corpus_run(args) -> int:
    kernels = args.kernels.split(",") if args.kernels else None
    reports = run_corpus(_options(args), kernels=kernels, jobs=args.jobs)
    print(render_table(reports))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report_json(reports), encoding="utf-8")
        (out / "report.csv").write_text(report_csv(reports), encoding="utf-8")
        render_figure(reports, str(out / "report.png"))
        print(f"\nwrote {out}/report.json, report.csv, report.png")
    if args.json:
        print(report_json(reports))
    return EXIT_OK


def cmd_simplify(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8") if args.file != "-" else sys.stdin.read()
    try:
        f = F.parse_formula(text.strip())
    except F.FormulaParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    dims = _parse_dims(args.dims) if args.dims else None
    rules = None
    if args.rules:
        from .rules import default_rules, load_rules_file

        rules = default_rules() + load_rules_file(args.rules)
    out = simplify(f, dims=dims, rules=rules)
    print(F.print_formula(out))
    if args.latex:
        print(F.to_latex(out))
    return EXIT_OK


def _parse_dims(text: str) -> dict:
    """e.g. "x=2,4;y=8" -> {"x": (2, 4), "y": (8,)}"""
    dims = {}
    for part in text.split(";"):
        name, _, shape = part.partition("=")
        dims[name.strip()] = tuple(int(d) for d in shape.split(",") if d.strip())
    return dims


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="klift",
        description="Lift block/grid tensor kernels to verified, simplified formulas",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_lift = sub.add_parser("lift", help="lift a single .klift kernel")
    p_lift.add_argument("file")
    p_lift.add_argument("--json", action="store_true")
    _add_pipeline_flags(p_lift)
    p_lift.set_defaults(fn=cmd_lift)

    p_corpus = sub.add_parser("corpus", help="operator corpus commands")
    sub_c = p_corpus.add_subparsers(dest="corpus_command", required=True)
    p_run = sub_c.add_parser("run", help="lift every corpus kernel")
    p_run.add_argument("--kernels", default=None, help="comma-separated subset")
    p_run.add_argument("--out", default=None, help="report directory (json/csv/png)")
    p_run.add_argument("--json", action="store_true")
    p_run.add_argument("--jobs", type=int, default=1)
    _add_pipeline_flags(p_run)
    p_run.set_defaults(fn=cmd_corpus_run)

    p_simp = sub.add_parser("simplify", help="simplify a formula file ('-' for stdin)")
    p_simp.add_argument("file")
    p_simp.add_argument("--dims", default=None, help='shapes like "x=2,4;y=8"')
    p_simp.add_argument("--rules", default=None,
                        help="extra rewrite-rule file appended to the default set")
    p_simp.add_argument("--latex", action="store_true")
    p_simp.set_defaults(fn=cmd_simplify)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
