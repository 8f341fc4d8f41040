"""Drive an external SMT-LIB2 solver process and parse its verdict.

The solver command comes from, in priority order: an explicit argument, the
``KLIFT_SOLVER`` environment variable, or the bundled fallback solver run as
``python -m klift.smt.cli``.  One fresh process per check; timeouts kill the
process.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import sexp
from .script import SmtScript

DEFAULT_TIMEOUT = 30.0


@dataclass(frozen=True)
class SolverVerdict:
    status: str  # sat | unsat | unknown | crash
    model: dict | None = None
    reason: str = ""
    wall_time: float = 0.0

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"


def solver_command(solver: str | None = None) -> list[str]:
    cmd = solver or os.environ.get("KLIFT_SOLVER")
    if cmd:
        return shlex.split(cmd)
    return [sys.executable, "-m", "klift.smt.cli"]


@dataclass
class Backend:
    solver: str | None = None
    timeout: float = DEFAULT_TIMEOUT
    artifacts_dir: str | None = None
    _counter: int = 0
    stats: dict = field(default_factory=lambda: {"checks": 0, "sat": 0, "unsat": 0, "unknown": 0})

    def check(self, script: SmtScript, name: str = "check", timeout: float | None = None) -> SolverVerdict:
        text = script.to_text()
        self._persist(name, text)
        verdict = run_solver(text, solver_command(self.solver), timeout or self.timeout)
        self.stats["checks"] += 1
        if verdict.status in self.stats:
            self.stats[verdict.status] += 1
        return verdict

    def _persist(self, name: str, text: str) -> None:
        if not self.artifacts_dir:
            return
        self._counter += 1
        path = Path(self.artifacts_dir)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"{self._counter:04d}-{name}.smt2").write_text(text, encoding="utf-8")


def run_solver(script_text: str, cmd: list[str], timeout: float) -> SolverVerdict:
    start = time.monotonic()
    try:
        proc = subprocess.run(
            cmd,
            input=script_text.encode(),
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            timeout=timeout + 1.0,
        )
    except FileNotFoundError:
        return SolverVerdict("crash", reason=f"solver not found: {cmd[0]}")
    except subprocess.TimeoutExpired:
        return SolverVerdict("unknown", reason="timeout", wall_time=time.monotonic() - start)
    wall = time.monotonic() - start
    out = proc.stdout.decode(errors="replace")
    status, model = parse_solver_output(out)
    if status is None:
        if proc.returncode != 0:
            return SolverVerdict(
                "crash",
                reason=f"exit {proc.returncode}: {proc.stderr.decode(errors='replace')[:300]}",
                wall_time=wall,
            )
        return SolverVerdict("crash", reason=f"unparseable output: {out[:300]}", wall_time=wall)
    return SolverVerdict(status, model=model, wall_time=wall)


def parse_solver_output(out: str):
    status = None
    for line in out.splitlines():
        line = line.strip()
        if line in ("sat", "unsat", "unknown"):
            status = line
            break
        if line.startswith("timeout"):
            status = "unknown"
            break
    if status is None:
        return None, None
    model = None
    if status == "sat":
        model = _parse_model(out)
    return status, model


def _parse_model(out: str) -> dict:
    """Pull (define-fun name () Sort value) entries out of whatever follows."""
    model: dict = {}
    idx = out.find("(")
    if idx < 0:
        return model
    try:
        forms = sexp.parse_all(out[idx:])
    except sexp.SexpError:
        return model
    def visit(form):
        if not isinstance(form, list):
            return
        if form[:1] == ["define-fun"] and len(form) >= 5 and form[2] == []:
            name = form[1]
            if name.startswith("|") and name.endswith("|"):
                name = name[1:-1]
            val = _parse_value(form[4])
            if val is not None:
                model[name] = val
            return
        for x in form:
            visit(x)
    for form in forms:
        visit(form)
    return model


def _parse_value(v) -> Fraction | None:
    if isinstance(v, str):
        try:
            return Fraction(v)
        except ValueError:
            return None
    if isinstance(v, list) and v:
        if v[0] == "-" and len(v) == 2:
            inner = _parse_value(v[1])
            return None if inner is None else -inner
        if v[0] == "/" and len(v) == 3:
            num, den = _parse_value(v[1]), _parse_value(v[2])
            if num is None or den in (None, 0):
                return None
            return num / den
    return None
