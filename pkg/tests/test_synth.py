"""Synthesis: splitting, guessing, pruning, enumeration, acceptance checks."""

import itertools
from fractions import Fraction

import pytest

from klift import formula as F
from klift import terms as T
from klift.synth import (SynthConfig, Synthesizer, View, guess_sum, split_by)


def _synth(kernels, name, **cfg):
    _, _, spec = kernels[name]
    return Synthesizer(spec, SynthConfig(**cfg))


def _canon_view(tensor):
    return View(tensor.dims, tuple(T.canon(e) for e in tensor.elements))


# --- split_by ---

def test_split_by_division_on_softmax(kernels):
    _, _, spec = kernels["softmax"]
    view = _canon_view(spec.canonical().outputs[0])
    got = split_by(view, "/")
    assert got is not None
    num, den = got
    assert all(e.kind == "fn" and e.payload == "exp" for e in num.elems)
    assert all(e.kind == "add" for e in den.elems)  # the row sum chains


def test_split_by_mismatch(kernels):
    _, _, spec = kernels["exp"]
    view = _canon_view(spec.canonical().outputs[0])
    assert split_by(view, "/") is None


def test_split_by_mixed_roots():
    a = T.elem(0, "a", 0)
    b = T.elem(1, "b", 0)
    view = View((2,), (T.canon(T.add(a, b)), T.canon(T.mul(a, b))))
    assert split_by(view, "+") is None


# --- guess_sum ---

def test_guess_sum_plain_on_row_sum(kernels):
    _, _, spec = kernels["sum"]
    view = _canon_view(spec.canonical().outputs[0])
    shape = guess_sum(view, spec.live)
    assert shape is not None and shape.kind == "plain"
    (arg,) = shape.args
    assert arg.dims == (2, 4)
    # addends are exactly the row elements of x
    want = [T.elem(1, "x", i) for i in range(8)]
    assert list(arg.elems) == [T.canon(w) for w in want]


def test_guess_sum_dot_product_on_matmul(kernels):
    """Brute-force index-pattern oracle over the 4x4 symbolic product."""
    _, _, spec = kernels["matmul"]
    view = _canon_view(spec.canonical().outputs[0])
    shape = guess_sum(view, spec.live)
    assert shape is not None and shape.kind == "dot"
    lview, rview = shape.args
    a_idx = {p.name: p.pos for p in spec.inputs}
    for i in range(4):
        for m in range(4):
            assert lview.elems[i * 4 + m] is T.canon(T.elem(a_idx["a"], "a", i * 4 + m))
    for m in range(4):
        for j in range(4):
            assert rview.elems[m * 4 + j] is T.canon(T.elem(a_idx["b"], "b", m * 4 + j))


def test_guess_sum_none_on_fn(kernels):
    _, _, spec = kernels["exp"]
    view = _canon_view(spec.canonical().outputs[0])
    assert guess_sum(view, spec.live) is None


# --- whole-pipeline synthesis ---

def test_synthesize_add(synth_results):
    res = synth_results["add"]
    assert res.ok and F.print_formula(res.formula) == "x1 + x2"


def test_synthesize_softmax_is_stable_form(synth_results):
    res = synth_results["softmax"]
    assert res.ok
    assert F.equivalent_form(
        res.formula, F.parse_formula("exp(x + -max(x)) / sum(exp(x + -max(x)))")
    )
    assert res.phase == "top-down"


def test_synthesize_leakyrelu_orientation(synth_results):
    res = synth_results["leakyrelu"]
    assert res.ok
    assert F.equivalent_form(res.formula, F.parse_formula("ifpos(x, 0.01 * x, 0)"))


def test_synthesize_attention(synth_results):
    res = synth_results["attention"]
    assert res.ok
    text = F.print_formula(res.formula)
    assert "matmul" in text and "transpose(k)" in text


# --- bottom-up ---

def test_bottom_up_reciprocal(kernels):
    s = _synth(kernels, "reciprocal", enable_topdown=False, time_budget=20)
    res = s.synthesize()
    assert res.ok and F.print_formula(res.formula) == "1 / x"
    assert res.phase == "bottom-up"


def test_bottom_up_neg_depth_one(kernels):
    s = _synth(kernels, "neg", enable_topdown=False, max_depth=1, time_budget=20)
    res = s.synthesize()
    assert res.ok and F.print_formula(res.formula) == "-x"


def test_depth_one_candidate_count_frozen(kernels):
    """Regression: depth-1 construction count for one input of shape 8.

    Oracle: exhaustive generation without pruning. Terminals are x and the
    constants {0, 1} (exp has no constants of its own), so one level grows
    |unary| * 3 + |binops + matmul| * 9 + |ifpos| * 9 candidates.
    """
    n_term = 3
    unary = 1 + len(T.FN_NAMES) + 2             # neg, 7 fns, sum, max
    per_pair = 4 + 1                            # + - * / and matmul
    ifpos_conds = 1                             # conditions range over inputs only
    oracle = (n_term                            # terminals are enumerated too
              + unary * n_term
              + per_pair * n_term * n_term
              + ifpos_conds * n_term * n_term)
    s = _synth(kernels, "exp", enable_topdown=False, max_depth=1, time_budget=30,
               enable_value_prune=False, enable_type_prune=False)
    res = s.synthesize()
    assert res.ok  # exp(x) found at depth 1
    assert res.stats.programs_enumerated == oracle == 87


# --- pruning ---

def test_prune_type_examples(kernels):
    s = _synth(kernels, "matmul")
    assert s.prune_type(F.MatMul(F.Input("a"), F.Input("b")))
    # misaligned inner dims are ill-typed: shape is None, dropped
    bad = F.MatMul(F.Input("a"), F.Input("nope"))
    assert s.shape(bad) is None and not s.prune_type(bad)
    # scalar constants broadcast, kept
    assert s.prune_type(F.Const(Fraction(2)))


def test_prune_value_examples():
    """The value-mismatch rule from the paper's example: spec position 0 uses
    a[0], b[0]; candidates touching c[0] or a[1] there cannot contribute."""
    a0, b0 = T.elem(0, "a", 0), T.elem(1, "b", 0)
    spec_like = _FakeSpec(
        inputs=[("a", 0, (2,)), ("b", 1, (2,)), ("c", 2, (2,))],
        out_elems=(T.canon(T.add(a0, b0)), T.canon(T.add(T.elem(0, "a", 1), T.elem(1, "b", 1)))),
        out_dims=(2,),
    )
    s = Synthesizer(spec_like.to_liftspec(), SynthConfig())
    assert s.prune_value(F.Bin("+", F.Input("a"), F.Input("b")))
    assert not s.prune_value(F.Bin("+", F.Input("a"), F.Input("c")))
    shifted = F.Reduce("sum", F.MatMul(F.Input("a"), F.Transpose(F.Input("a"))))
    # any candidate whose probe position touches a[1] is dropped too
    if s.shape(shifted) is not None:
        assert not s.prune_value(shifted)


class _FakeSpec:
    def __init__(self, inputs, out_elems, out_dims):
        self.inputs = inputs
        self.out_elems = out_elems
        self.out_dims = out_dims

    def to_liftspec(self):
        from klift.executor import LiftSpec, SymbolicTensor

        ins = tuple(
            SymbolicTensor(name, pos, dims,
                           tuple(T.elem(pos, name, i) for i in range(dims[0])))
            for name, pos, dims in self.inputs
        )
        outs = (SymbolicTensor("y", 99, self.out_dims, self.out_elems),)
        return LiftSpec(ins, outs, 4, 4)


def test_pruning_never_drops_golden_subterms(kernels, synth_results, corpus_entries):
    """Pruning safety: no subterm of a known-good formula is pruned away."""
    for entry in corpus_entries:
        if entry.golden is None or not synth_results[entry.name].ok:
            continue
        _, _, spec = kernels[entry.name]
        s = Synthesizer(spec, SynthConfig())
        golden = synth_results[entry.name].formula
        for sub in F.subformulas(golden):
            assert s.prune_type(sub), (entry.name, sub)
            assert s.prune_value(sub), (entry.name, sub)


# --- check_candidate ---

def test_check_candidate_syntactic_accept(kernels):
    s = _synth(kernels, "add")
    status, _ = s.check_candidate(F.Bin("+", F.Input("x1"), F.Input("x2")))
    assert status == "accepted"


def test_check_candidate_rejects_with_witness(kernels):
    s = _synth(kernels, "add")
    status, witness = s.check_candidate(F.Bin("-", F.Input("x1"), F.Input("x2")))
    assert status == "rejected"
    assert witness is not None
    # the witness reproduces: substitute it into both sides
    lhs = T.substitute(T.sub(T.elem(1, "x1", 0), T.elem(2, "x2", 0)), witness)
    rhs = T.substitute(T.add(T.elem(1, "x1", 0), T.elem(2, "x2", 0)), witness)
    assert lhs != rhs


def test_check_candidate_solver_unsat_needs_exp_axiom(kernels):
    """A value-equal but syntactically different softmax candidate is accepted
    through the solver; cancelling the common factor needs exp > 0."""
    s = _synth(kernels, "softmax", always_solver=True)
    base_num = F.parse_formula("exp(x + -max(x))")
    base_den = F.parse_formula("sum(exp(x + -max(x)))")
    two = F.Const(Fraction(2))
    scaled = F.Bin("/", F.Bin("*", two, base_num), F.Bin("*", two, base_den))
    status, _ = s.check_candidate(scaled)
    assert status == "accepted"
    assert s.stats.solver_calls >= 1


def test_synthesis_soundness_on_random_bindings(kernels, synth_results):
    """Accepted formulas agree with the spec on 100 random rational bindings."""
    import random

    for name in ("add", "relu", "softmax", "silumul", "logsoftmax"):
        _, _, spec = kernels[name]
        res = synth_results[name]
        rng = random.Random(55)
        dims = {t.name: t.dims for t in spec.inputs}
        out = spec.outputs[0]
        for _ in range(100):
            arrays, binding = {}, {}
            for t in spec.inputs:
                vals = [Fraction(rng.randrange(10, 250), 101) for _ in t.elements]
                arrays[t.name] = vals
                binding.update({(t.pos, t.name, i): v for i, v in enumerate(vals)})
            want = [T.substitute(e, binding) for e in out.elements]
            got = F.eval_numeric(res.formula, dims, arrays, out.dims)
            for w, g in zip(want, got):
                if isinstance(w, Fraction) and isinstance(g, Fraction):
                    assert w == g, name
                else:
                    assert abs(float(w) - float(g)) <= 1e-9 * max(1.0, abs(float(w))), name


def test_ablation_monotonicity(kernels):
    """Disabling top-down yields a subset of the full configuration's set."""
    fast = dict(time_budget=6, node_budget=60_000)
    full_ok, ablated_ok = set(), set()
    for name in ("add", "neg", "reciprocal", "relu", "softmax", "logsoftmax"):
        if Synthesizer(kernels[name][2], SynthConfig(**fast)).synthesize().ok:
            full_ok.add(name)
        cfg = SynthConfig(enable_topdown=False, **fast)
        if Synthesizer(kernels[name][2], cfg).synthesize().ok:
            ablated_ok.add(name)
    assert ablated_ok <= full_ok
    assert "softmax" in full_ok and "softmax" not in ablated_ok
