"""Hoare-logic verification of a lifted formula against its kernel.

The host loop runs one thread per pid; verification builds the three loop
statements (establishment, preservation, exit) around a linear-template
invariant ``forall i, 0 <= i < a*pid + b -> P(i)``.

The workhorse is the thread pattern: one symbolic-affine execution of the
kernel body yields the store effects as functions of pid, and each stored
value is proved equal to the postcondition's right-hand side at that index.
After that proof, P stays an *uninterpreted* predicate inside the VCs, which
turns array reasoning into index reasoning the solver can settle.  Without
the pattern (or with --no-verify-pattern) the VCs carry the concrete
pointwise formula and store semantics, which solvers rarely manage.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from . import formula as F
from . import kernel as K
from . import terms as T
from .axioms import AxiomSet, axioms_for
from .executor import LiftSpec, ShapeEnv, thread_effects
from .interp import ExecError, LinIdx
from .logic import AffineTermAlgebra, PointwiseBuilder, render_sexp
from .smt.backend import Backend
from .smt.script import (SmtScript, declare_axiom_fns, declare_for_terms,
                         equality_script, int_term, sym_to_sexp, term_fns)


# ---------------------------------------------------------------------------
# pre/post generation


def gen_precondition(spec: LiftSpec, formula: F.Formula,
                     mod: K.KernelModule | None = None) -> AxiomSet:
    fns = set()
    for out in spec.outputs:
        fns |= term_fns(*out.elements)
    for sub in F.subformulas(formula):
        if isinstance(sub, F.Fn):
            fns.add(sub.name)
    return axioms_for(fns, mod)


@dataclass
class Postcondition:
    out: str
    out_dims: tuple  # concrete dims at the verification shape
    formula: F.Formula
    builder: PointwiseBuilder
    length_sexp: object  # symbolic output length, linear in G

    def rhs_sexp(self, ivar: str = "i"):
        return self.builder.at_flat(self.formula, ivar)

    def render(self) -> str:
        rhs = render_sexp(self.rhs_sexp("i"))
        return f"forall i, 0 <= i < {render_sexp(self.length_sexp)} -> {self.out}[i] = {rhs}"


def gen_postcondition(formula: F.Formula, env: ShapeEnv, block: int,
                      spec: LiftSpec) -> Postcondition:
    out = spec.outputs[0]
    dims = {t.name: t.dims for t in spec.inputs}
    builder = PointwiseBuilder(dims, out.dims)
    per_thread = out.size // env.grid
    length = ["*", str(per_thread), "G"] if per_thread != 1 else "G"
    return Postcondition(out.name, out.dims, formula, builder, length)


# ---------------------------------------------------------------------------
# thread effect abstraction


@dataclass
class ThreadPattern:
    out: str
    stride: int  # pid coefficient of the written indices
    lanes: int  # indices written per thread (offsets 0..lanes-1)
    effects: list  # (LinIdx index, stored SymTerm, rhs SymTerm)
    fallback: bool = False
    reason: str = ""


def abstract_thread_effect(loop: K.HostLoop, post: Postcondition, env: ShapeEnv,
                           spec: LiftSpec, axioms: AxiomSet, backend: Backend):
    """Extract P(stride*pid + k) effects and prove them equal to the
    postcondition pointwise; returns (pattern, refutation model | None)."""
    mod = loop.kernel
    try:
        effects = thread_effects(mod, env)
    except ExecError as e:
        return ThreadPattern(post.out, 0, 0, [], fallback=True, reason=str(e)), None
    if not effects or any(t != post.out for t, _, _ in effects):
        return ThreadPattern(post.out, 0, 0, [], fallback=True,
                             reason="multiple outputs in thread effect"), None
    idxs = [ix if isinstance(ix, LinIdx) else LinIdx(0, ix) for _, ix, _ in effects]
    coeffs = {ix.a for ix in idxs}
    if len(coeffs) != 1:
        return ThreadPattern(post.out, 0, 0, [], fallback=True,
                             reason="non-uniform index stride"), None
    stride = coeffs.pop()
    offsets = sorted(ix.b for ix in idxs)
    lanes = len(effects)
    if offsets != list(range(lanes)) or (stride != lanes and not (stride == 0 and env.grid == 1)):
        return ThreadPattern(post.out, 0, 0, [], fallback=True,
                             reason=f"store indices not a contiguous block: {offsets}"), None

    positions = {t.name: t.pos for t in spec.inputs}
    evaluator = F.Evaluator({t.name: t.dims for t in spec.inputs},
                            AffineTermAlgebra(positions))
    checked = []
    for _, ix, stored in effects:
        ix = ix if isinstance(ix, LinIdx) else LinIdx(0, ix)
        multi = _unflatten_affine(ix, post.out_dims)
        if multi is None:
            return ThreadPattern(post.out, stride, lanes, [], fallback=True,
                                 reason="index does not align with output rows"), None
        rhs = evaluator.at(post.formula, multi)
        checked.append((ix, stored, rhs))
    # one query for all lanes: any lane differing somewhere is a sat witness
    script = lanes_equality_script(checked, axioms.formulas(arrays=True))
    verdict = backend.check(script, "thread-effect")
    if verdict.is_unsat:
        return ThreadPattern(post.out, stride, lanes, checked, fallback=False), None
    if verdict.is_sat:
        return ThreadPattern(post.out, stride, lanes, [], fallback=True,
                             reason="thread effect differs from formula"), verdict.model
    return ThreadPattern(post.out, stride, lanes, [], fallback=True,
                         reason=f"effect equivalence unknown ({verdict.reason})"), None


def lanes_equality_script(checked: list, axioms) -> SmtScript:
    """¬(∧ lanes stored = rhs): unsat proves every lane matches."""
    script = SmtScript(produce_models=True)
    terms = [t for _, stored, rhs in checked for t in (stored, rhs)]
    declare_for_terms(script, terms, arrays=True)
    script.declare_const("pid", "Int")
    script.add([">=", "pid", "0"])
    for ax in axioms:
        declare_axiom_fns(script, ax)
        script.add(ax)
    disjuncts = [
        ["not", ["=", sym_to_sexp(stored, arrays=True), sym_to_sexp(rhs, arrays=True)]]
        for _, stored, rhs in checked
    ]
    script.add(disjuncts[0] if len(disjuncts) == 1 else ["or"] + disjuncts)
    return script


def _unflatten_affine(ix: LinIdx, dims: tuple):
    if len(dims) == 1:
        return (ix,)
    if len(dims) == 2:
        cols = dims[1]
        if ix.a % cols == 0 and 0 <= ix.b < cols:
            return (LinIdx(ix.a // cols, 0), ix.b)
        if ix.a % cols == 0:
            return (LinIdx(ix.a // cols, ix.b // cols), ix.b % cols)
    return None


# ---------------------------------------------------------------------------
# verification conditions


@dataclass
class VerificationCondition:
    name: str
    script: SmtScript


@dataclass
class VcOutcome:
    name: str
    status: str
    wall: float = 0.0


def build_vcs(axioms: AxiomSet, a: int, b: int, pattern: ThreadPattern,
              post: Postcondition, concrete_body=None,
              grid_const: int | None = None) -> list[VerificationCondition]:
    """The three Hoare statements with I = forall i in [0, a*pid+b): P(i).

    In pattern mode P is an uninterpreted predicate and the loop body is
    abstracted to its proved effects; in concrete mode (pattern.fallback or
    the --no-verify-pattern ablation) P(i) is the pointwise equality itself
    and the body is the store update.
    """
    use_abstract = concrete_body is None
    vcs = []
    for name in ("vc1-init", "vc2-preserve", "vc3-exit"):
        script = SmtScript(produce_models=True)
        script.declare_const("pid", "Int")
        script.declare_const("G", "Int")
        script.declare_const("i0", "Int")
        for ax in axioms.formulas(arrays=True):
            declare_axiom_fns(script, ax)
            script.add(ax)
        script.add([">=", "G", "1"])
        if grid_const is not None:
            script.add(["=", "G", str(grid_const)])

        if use_abstract:
            script.declare_fun("P", ["Int"], "Bool")
            p_of = lambda ix: ["P", ix]
        else:
            rhs = post.rhs_sexp("i0")
            _declare_sexp_symbols(script, rhs)
            script.declare_const(post.out, ["Array", "Int", "Real"])
            p_of = None

        def inv_premise(bound_sexp, array=post.out):
            if use_abstract:
                return ["forall", [["i", "Int"]],
                        ["=>", ["and", ["<=", "0", "i"], ["<", "i", bound_sexp]],
                         ["P", "i"]]]
            rhs_i = post.rhs_sexp("i")
            _declare_sexp_symbols(script, rhs_i)
            return ["forall", [["i", "Int"]],
                    ["=>", ["and", ["<=", "0", "i"], ["<", "i", bound_sexp]],
                     ["=", ["select", array, "i"], rhs_i]]]

        def skolem_violation(bound_sexp, array=post.out):
            script.add(["<=", "0", "i0"])
            script.add(["<", "i0", bound_sexp])
            if use_abstract:
                script.add(["not", ["P", "i0"]])
            else:
                script.add(["not", ["=", ["select", array, "i0"], post.rhs_sexp("i0")]])

        bound_now = int_term(LinIdx(a, b))
        bound_next = int_term(LinIdx(a, a + b))
        if name == "vc1-init":
            script.add(["=", "pid", "0"])
            skolem_violation(int_term(b))
        elif name == "vc2-preserve":
            script.add([">=", "pid", "0"])
            script.add(["<", "pid", "G"])
            script.add(inv_premise(bound_now))
            if use_abstract:
                for ix, _, _ in pattern.effects:
                    script.add(["P", int_term(ix)])
                skolem_violation(bound_next)
            else:
                updated = post.out
                store_expr = post.out
                for ix, stored_sexp in concrete_body:
                    _declare_sexp_symbols(script, stored_sexp)
                    store_expr = ["store", store_expr, int_term(ix), stored_sexp]
                script.declare_const("y!next", ["Array", "Int", "Real"])
                script.add(["=", "y!next", store_expr])
                script.add(["<=", "0", "i0"])
                script.add(["<", "i0", bound_next])
                script.add(["not", ["=", ["select", "y!next", "i0"], post.rhs_sexp("i0")]])
        else:  # vc3-exit
            script.add([">=", "pid", "0"])
            script.add(["not", ["<", "pid", "G"]])
            script.add(inv_premise(bound_now))
            skolem_violation(post.length_sexp)
        vcs.append(VerificationCondition(name, script))
    return vcs


def _declare_sexp_symbols(script: SmtScript, e) -> None:
    if isinstance(e, str):
        if e[0].isalpha() and e not in ("i", "i0", "pid", "G", "ite", "true", "false"):
            pass
        return
    if not isinstance(e, list) or not e:
        return
    head = e[0]
    if head == "select" and isinstance(e[1], str):
        script.declare_const(e[1], ["Array", "Int", "Real"])
        _declare_sexp_symbols(script, e[2])
        return
    if head in T.FN_NAMES:
        script.declare_fun(head, ["Real"], "Real")
    for x in e[1:]:
        _declare_sexp_symbols(script, x)


# ---------------------------------------------------------------------------
# invariant search + full verification


@dataclass
class VerifyOutcome:
    verdict: str  # verified | refuted | unknown
    reason: str = ""
    witness: dict | None = None
    invariant: tuple | None = None
    pattern: bool = False
    vcs: list = field(default_factory=list)
    candidates_tried: list = field(default_factory=list)

    @property
    def is_verified(self) -> bool:
        return self.verdict == "verified"


def invariant_candidates(block: int, stride: int) -> list[tuple[int, int]]:
    cands = [(stride, 0), (block, 0)]
    for total in range(0, 2 * block + 1):
        for a in range(0, block + 1):
            b = total - a
            if 0 <= b <= block:
                cands.append((a, b))
    seen = set()
    out = []
    for c in cands:
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def synthesize_invariant(pattern: ThreadPattern, post: Postcondition, axioms: AxiomSet,
                         backend: Backend, block: int, concrete_body=None,
                         grid_const: int | None = None, max_candidates: int = 6):
    """Search (a, b); first candidate whose three VCs all come back unsat wins."""
    tried = []
    stride = pattern.stride if pattern.stride > 0 else pattern.lanes or block
    for a, b in invariant_candidates(block, stride)[:max_candidates]:
        vcs = build_vcs(axioms, a, b, pattern, post, concrete_body=concrete_body,
                        grid_const=grid_const)
        outcomes = []
        for vc in vcs:
            verdict = backend.check(vc.script, vc.name)
            outcomes.append(VcOutcome(vc.name, verdict.status, verdict.wall_time))
            if verdict.status != "unsat":
                break
        tried.append(((a, b), outcomes))
        if len(outcomes) == 3 and all(o.status == "unsat" for o in outcomes):
            return (a, b), outcomes, tried
    return None, None, tried


def verify(mod: K.KernelModule, formula: F.Formula, env: ShapeEnv, spec: LiftSpec,
           backend: Backend | None = None, use_pattern: bool = True) -> VerifyOutcome:
    backend = backend or Backend()
    if len(spec.outputs) != 1:
        return VerifyOutcome("unknown", reason="multi-output kernels are not verified")
    axioms = gen_precondition(spec, formula, mod)
    post = gen_postcondition(formula, env, mod.block_size, spec)
    loop = K.sequentialize(mod)

    pattern, refutation = abstract_thread_effect(loop, post, env, spec, axioms, backend)
    if refutation is not None:
        return VerifyOutcome("refuted", reason=pattern.reason, witness=refutation,
                             pattern=False)

    concrete_body = None
    if not use_pattern or pattern.fallback:
        concrete_body = _concrete_effects(mod, env, spec)
        if concrete_body is None:
            return VerifyOutcome("unknown", reason=pattern.reason or "thread effects not affine",
                                 pattern=False)

    inv, outcomes, tried = synthesize_invariant(
        pattern, post, axioms, backend, mod.block_size, concrete_body=concrete_body,
        grid_const=K.grid_constant(mod)
    )
    if inv is not None:
        return VerifyOutcome("verified", invariant=inv, pattern=concrete_body is None,
                             vcs=outcomes, candidates_tried=tried)
    reasons = {o.status for _, oc in tried for o in oc}
    reason = "solver returned unknown on verification conditions" if "unknown" in reasons \
        else "no linear invariant candidate validated"
    return VerifyOutcome("unknown", reason=reason, pattern=concrete_body is None,
                         candidates_tried=tried)


def _concrete_effects(mod: K.KernelModule, env: ShapeEnv, spec: LiftSpec):
    """(index, stored-value sexp) pairs for the concrete-body VC2."""
    try:
        effects = thread_effects(mod, env)
    except ExecError:
        return None
    out = []
    for _, ix, stored in effects:
        ix = ix if isinstance(ix, LinIdx) else LinIdx(0, ix)
        out.append((ix, sym_to_sexp(stored, arrays=True)))
    return out
