"""Randomized differential testing: concrete kernel runs vs formula evaluation."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from math import prod

import numpy as np

from . import formula as F
from . import kernel as K
from . import terms as T
from .executor import LiftSpec, ShapeEnv, run_concrete

DEFAULT_RANGE = (-2.0, 2.0)


@dataclass(frozen=True)
class DiffResult:
    passed: bool
    trials: int
    skipped: int
    max_rel_error: float
    note: str = ""


def differential_test(mod: K.KernelModule, f: F.Formula, env: ShapeEnv, spec: LiftSpec,
                      trials: int = 100, tol: float = 1e-5,
                      domains: dict | None = None) -> DiffResult:
    """Random inputs in [-2, 2] (shifted positive per the domain table),
    kernel by concrete interpretation vs formula by reference evaluation."""
    domains = domains or {}
    dims = {t.name: t.dims for t in spec.inputs}
    out = spec.outputs[0]
    rng = np.random.default_rng(zlib.crc32(mod.name.encode()) & 0xFFFF)
    fshape = F.shape_of(f, dims)
    if fshape is None:
        return DiffResult(False, 0, 0, float("inf"), "formula does not shape-check")
    exact = F.squeeze(fshape) == F.squeeze(out.dims)
    if not exact:
        b = F.broadcast(fshape, out.dims)
        if b is None or F.squeeze(b) != F.squeeze(out.dims) or len(fshape) > len(out.dims):
            return DiffResult(False, 0, 0, float("inf"), "formula does not shape-check")
    worst = 0.0
    done = 0
    skipped = 0
    for _ in range(trials):
        ok = False
        for _attempt in range(10):
            arrays = {}
            for t in spec.inputs:
                lo, hi = domains.get(t.name, DEFAULT_RANGE)
                n = max(1, prod(t.dims)) if t.dims else 1
                arrays[t.name] = [float(v) for v in rng.uniform(lo, hi, size=n)]
            try:
                got = run_concrete(mod, env, arrays)[out.name]
                want = F.eval_numeric(f, dims, arrays, None if exact else out.dims)
            except (T.EvalDomainError, ZeroDivisionError, OverflowError):
                continue
            for a, b in zip(got, want):
                af, bf = float(a), float(b)
                worst = max(worst, abs(af - bf) / max(1.0, abs(af), abs(bf)))
            ok = True
            break
        if ok:
            done += 1
        else:
            skipped += 1
    note = f"{skipped} trials skipped after domain-error retries" if skipped else ""
    return DiffResult(done > 0 and worst <= tol, done, skipped, worst, note)
