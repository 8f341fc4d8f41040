"""Precondition axiom library for the uninterpreted math functions.

Each entry is a universally quantified SMT-LIB formula (as an s-expression)
characterizing just enough of the real function for verification: positivity
of exp, range of tanh, and the guarded inverse laws.  Parameter assumptions
annotated in kernels (e.g. ``eps: real (> 0)``) are appended per kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import kernel as K
from .smt.script import rational

FUNCTION_AXIOMS: dict[str, list] = {
    "exp": [
        ["forall", [["v", "Real"]], [">", ["exp", "v"], "0"]],
        ["forall", [["a", "Real"], ["b", "Real"]],
         ["=>", ["<", "a", "b"], ["<", ["exp", "a"], ["exp", "b"]]]],
    ],
    "sqrt": [
        ["forall", [["v", "Real"]], ["=>", [">=", "v", "0"], [">=", ["sqrt", "v"], "0"]]],
    ],
    "tanh": [
        ["forall", [["v", "Real"]],
         ["and", ["<", ["tanh", "v"], "1"], [">", ["tanh", "v"], ["-", "1"]]]],
    ],
    "abs": [
        ["forall", [["v", "Real"]], [">=", ["abs", "v"], "0"]],
    ],
}

# inverse laws need both symbols in play
LOG_EXP_AXIOMS: list = [
    ["forall", [["v", "Real"]], ["=", ["log", ["exp", "v"]], "v"]],
    ["forall", [["v", "Real"]], ["=>", [">", "v", "0"], ["=", ["exp", ["log", "v"]], "v"]]],
]


@dataclass
class AxiomSet:
    function_axioms: list = field(default_factory=list)  # (fn name, sexp)
    param_assumptions: list = field(default_factory=list)  # (param name, rel sym, bound sexp)
    warnings: list = field(default_factory=list)

    def formulas(self, arrays: bool = False) -> list:
        """Assertion list; scalar params are ``name.0`` constants in the
        quantifier-free encoding and ``(select name 0)`` in array mode."""
        from .smt.script import elem_symbol

        out = [ax for _, ax in self.function_axioms]
        for name, rel, bound in self.param_assumptions:
            ref = ["select", name, "0"] if arrays else elem_symbol(name, 0)
            out.append([rel, ref, bound])
        return out


def axioms_for(fn_names: set[str], mod: K.KernelModule | None = None) -> AxiomSet:
    out = AxiomSet()
    for name in sorted(fn_names):
        if name in FUNCTION_AXIOMS:
            for ax in FUNCTION_AXIOMS[name]:
                out.function_axioms.append((name, ax))
        elif name in ("log",):
            pass  # covered by the inverse laws below when exp is present
        else:
            out.warnings.append(f"no axioms for function {name}")
    if "log" in fn_names and "exp" in fn_names:
        for ax in LOG_EXP_AXIOMS:
            out.function_axioms.append(("log", ax))
    if mod is not None:
        for p in mod.scalar_reals:
            if p.assume is not None:
                rel, bound = p.assume
                sym = {"gt": ">", "ge": ">=", "lt": "<", "le": "<=", "eq": "="}[rel]
                out.param_assumptions.append((p.name, sym, rational(bound)))
    return out
