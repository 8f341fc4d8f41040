"""klift-smt: SMT-LIB2 over stdin/stdout, backed by the fallback solver.

Reads a whole script from stdin (or a file argument), prints one line per
check-sat plus any requested model.  Import surface is stdlib-only so
process startup stays cheap; one fresh process per check.
"""

from __future__ import annotations

import sys

from . import solve


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if args and args[0] in ("-h", "--help"):
        print("usage: klift-smt [script.smt2]  (reads stdin when no file given)")
        return 0
    if args:
        with open(args[0], "r", encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = sys.stdin.read()
    try:
        outputs = solve.Solver().execute(text)
    except solve.SolveFailure as e:
        print("unknown")
        print(f'(error "{e}")', file=sys.stderr)
        return 0
    except solve.sexp.SexpError as e:
        print(f'(error "parse: {e}")')
        return 1
    for line in outputs:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
