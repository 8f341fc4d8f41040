"""Deterministic SMT-LIB2 script construction from symbolic terms.

Two element encodings are used:

* const mode: tensor elements become free Real constants ``x.3`` — the
  quantifier-free candidate checks;
* array mode: tensors are ``(Array Int Real)`` and elements are selects with
  (possibly pid-affine) integer indices — the verifier's scripts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .. import terms as T
from ..interp import LinIdx
from . import sexp


def rational(q: Fraction) -> object:
    if q < 0:
        return ["-", rational(-q)]
    if q.denominator == 1:
        return str(q.numerator)
    return ["/", str(q.numerator), str(q.denominator)]


def int_term(idx) -> object:
    if isinstance(idx, int):
        return str(idx) if idx >= 0 else ["-", str(-idx)]
    if isinstance(idx, LinIdx):
        a, b = idx.a, idx.b
        if a == 0:
            return int_term(b)
        pid_part = "pid" if a == 1 else ["*", int_term(a), "pid"]
        if b == 0:
            return pid_part
        return ["+", pid_part, int_term(b)]
    raise TypeError(f"bad index {idx!r}")


def elem_symbol(name: str, index: int) -> str:
    return f"{name}.{index}"


_REL = {"gt": ">", "ge": ">=", "eq": "="}
_BIN = {"add": "+", "mul": "*", "div": "/"}


def sym_to_sexp(t: T.SymTerm, arrays: bool = False) -> object:
    k = t.kind
    if k == "const":
        return rational(t.payload)
    if k == "elem":
        _, name, idx = t.payload
        if arrays:
            return ["select", name, int_term(idx)]
        if isinstance(idx, LinIdx):
            raise ValueError("affine element index requires array mode")
        return elem_symbol(name, idx)
    if k == "neg":
        return ["-", sym_to_sexp(t.args[0], arrays)]
    if k in _BIN:
        return [_BIN[k], sym_to_sexp(t.args[0], arrays), sym_to_sexp(t.args[1], arrays)]
    if k == "fn":
        return [t.payload, sym_to_sexp(t.args[0], arrays)]
    if k == "ite":
        return ["ite"] + [sym_to_sexp(a, arrays) for a in t.args]
    if k == "cmp":
        return [_REL[t.payload]] + [sym_to_sexp(a, arrays) for a in t.args]
    if k == "bool":
        return [t.payload] + [sym_to_sexp(a, arrays) for a in t.args]
    raise AssertionError(k)


def term_fns(*ts: T.SymTerm) -> set[str]:
    out: set[str] = set()
    stack = list(ts)
    seen: set[int] = set()
    while stack:
        cur = stack.pop()
        if cur.uid in seen:
            continue
        seen.add(cur.uid)
        if cur.kind == "fn":
            out.add(cur.payload)
        stack.extend(cur.args)
    return out


def term_elems(*ts: T.SymTerm) -> set[tuple]:
    out: set[tuple] = set()
    stack = list(ts)
    seen: set[int] = set()
    while stack:
        cur = stack.pop()
        if cur.uid in seen:
            continue
        seen.add(cur.uid)
        if cur.kind == "elem":
            out.add(cur.payload)
        stack.extend(cur.args)
    return out


@dataclass
class SmtScript:
    logic: str = "ALL"
    produce_models: bool = False
    decls: list = field(default_factory=list)  # (name, sexp declaration)
    assertions: list = field(default_factory=list)
    _declared: set = field(default_factory=set)

    def declare_const(self, name: str, sort) -> None:
        if name not in self._declared:
            self._declared.add(name)
            self.decls.append((name, ["declare-const", name, sort]))

    def declare_fun(self, name: str, arg_sorts: list, ret) -> None:
        if name not in self._declared:
            self._declared.add(name)
            self.decls.append((name, ["declare-fun", name, arg_sorts, ret]))

    def add(self, assertion) -> None:
        self.assertions.append(["assert", assertion])

    def to_text(self) -> str:
        lines = []
        if self.produce_models:
            lines.append("(set-option :produce-models true)")
        lines.append(f"(set-logic {self.logic})")
        for _, d in sorted(self.decls, key=lambda nd: nd[0]):
            lines.append(sexp.render(d))
        for a in self.assertions:
            lines.append(sexp.render(a))
        lines.append("(check-sat)")
        if self.produce_models:
            lines.append("(get-model)")
        lines.append("(exit)")
        return "\n".join(lines) + "\n"


def declare_for_terms(script: SmtScript, ts, arrays: bool = False) -> None:
    for name in sorted(term_fns(*ts)):
        script.declare_fun(name, ["Real"], "Real")
    if arrays:
        tensors = sorted({p[1] for t in ts for p in term_elems(t)})
        for name in tensors:
            script.declare_const(name, ["Array", "Int", "Real"])
    else:
        for _, name, idx in sorted(term_elems(*ts)):
            script.declare_const(elem_symbol(name, idx), "Real")


def disequality_script(cand, spec_outs, axioms, produce_models: bool = True) -> SmtScript:
    """∨_i candidate_i ≠ output_i with the precondition axioms asserted."""
    script = SmtScript(produce_models=produce_models)
    all_terms = list(cand) + list(spec_outs)
    declare_for_terms(script, all_terms)
    for ax in axioms:
        declare_axiom_fns(script, ax)
        script.add(ax)
    disjuncts = [
        ["not", ["=", sym_to_sexp(c), sym_to_sexp(s)]] for c, s in zip(cand, spec_outs)
    ]
    script.add(disjuncts[0] if len(disjuncts) == 1 else ["or"] + disjuncts)
    return script


def equality_script(lhs: T.SymTerm, rhs: T.SymTerm, axioms, int_vars=("pid",),
                    produce_models: bool = True) -> SmtScript:
    """¬(lhs = rhs) over array-encoded elements with a free thread id."""
    script = SmtScript(produce_models=produce_models)
    declare_for_terms(script, [lhs, rhs], arrays=True)
    for v in int_vars:
        script.declare_const(v, "Int")
        script.add([">=", v, "0"])
    for ax in axioms:
        declare_axiom_fns(script, ax)
        script.add(ax)
    script.add(["not", ["=", sym_to_sexp(lhs, arrays=True), sym_to_sexp(rhs, arrays=True)]])
    return script


def declare_axiom_fns(script: SmtScript, ax) -> None:
    """Declare any function symbols an axiom mentions."""
    for name in _axiom_fns(ax):
        script.declare_fun(name, ["Real"], "Real")


def _axiom_fns(e) -> set[str]:
    out: set[str] = set()
    if isinstance(e, list):
        if e and isinstance(e[0], str) and e[0] in T.FN_NAMES:
            out.add(e[0])
        for x in e:
            out |= _axiom_fns(x)
    return out
