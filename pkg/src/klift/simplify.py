"""Formula simplification: constant recovery, saturation, extraction."""

from __future__ import annotations

import math
import random
from fractions import Fraction

from . import formula as F
from .egraph import CostModel, EGraph, SaturationLimits, extract, formula_cost, saturate
from .rules import default_rules

DEFAULT_CONST_TOL = 1e-7


def recover_constants(f: F.Formula, tol: float = DEFAULT_CONST_TOL) -> F.Formula:
    """Replace constants within ``tol`` (relative) of a dictionary entry by the
    named constant; exact small rationals like 1/100 stay as they are."""

    def walk(g: F.Formula) -> F.Formula:
        match g:
            case F.Const(q):
                x = float(q)
                for key, (_, val) in F.NAMED_CONSTANTS.items():
                    if abs(x - val) <= tol * max(1.0, abs(val)):
                        return F.NamedConst(key)
                return g
            case F.Bin(op, l, r):
                return F.Bin(op, walk(l), walk(r))
            case F.Neg(x):
                return F.Neg(walk(x))
            case F.Fn(name, x):
                return F.Fn(name, walk(x))
            case F.Reduce(kind, x):
                return F.Reduce(kind, walk(x))
            case F.MatMul(l, r):
                return F.MatMul(walk(l), walk(r))
            case F.Transpose(x):
                return F.Transpose(walk(x))
            case F.IfPos(c, a, b):
                return F.IfPos(walk(c), walk(a), walk(b))
            case _:
                return g

    return walk(f)


def simplify(f: F.Formula, dims: dict | None = None, rules=None,
             limits: SaturationLimits | None = None, cost: CostModel | None = None,
             const_tol: float = DEFAULT_CONST_TOL, validate: bool = False) -> F.Formula:
    """recover constants, saturate, extract the cheapest equivalent form."""
    cost = cost or CostModel()
    f1 = recover_constants(f, const_tol)
    eg = EGraph(dims=dims or {})
    root = eg.add_formula(f1)
    saturate(eg, rules if rules is not None else default_rules(), limits)
    out = extract(eg, root, cost)
    if formula_cost(out, cost) > formula_cost(f1, cost):
        out = f1
    if validate and dims is not None:
        check_equivalent(f, out, dims)
    return out


def check_equivalent(a: F.Formula, b: F.Formula, dims: dict, trials: int = 100,
                     rel_tol: float = 1e-9, seed: int = 7113) -> float:
    """Numeric equivalence of two formulas over random inputs; returns the max
    relative error and raises on disagreement or shape mismatch."""
    sa, sb = F.shape_of(a, dims), F.shape_of(b, dims)
    if sa is None or sb is None or F.squeeze(sa) != F.squeeze(sb):
        raise AssertionError(f"shape mismatch after simplification: {sa} vs {sb}")
    needs_positive = any(
        isinstance(g, F.Fn) and g.name in ("log", "sqrt")
        for f in (a, b) for g in F.subformulas(f)
    )
    lo = 30 if needs_positive else -200
    rng = random.Random(seed)
    worst = 0.0
    done = 0
    attempts = 0
    while done < trials:
        attempts += 1
        if attempts > trials * 20:
            raise AssertionError("could not sample enough in-domain inputs")
        arrays = {}
        for name, d in dims.items():
            n = max(1, math.prod(d))
            arrays[name] = [Fraction(rng.randrange(lo, 230), 100) for _ in range(n)]
        try:
            va = F.eval_numeric(a, dims, arrays)
            vb = F.eval_numeric(b, dims, arrays)
        except Exception:
            continue
        for x, y in zip(va, vb):
            xf, yf = float(x), float(y)
            err = abs(xf - yf) / max(1.0, abs(xf))
            worst = max(worst, err)
            if err > rel_tol:
                raise AssertionError(f"simplification changed value: {xf} vs {yf}")
        done += 1
    return worst
