"""Symbolic execution: LiftSpecs, default shapes, error cases, soundness."""

import random
from fractions import Fraction

import pytest

from klift import kernel as K
from klift import terms as T
from klift.executor import default_shape, execute, resolve_shapes, run_concrete, spec_to_json
from klift.interp import ExecError


def test_add_spec_is_pointwise_sum(kernels):
    mod, env, spec = kernels["add"]
    assert env.grid == 2
    y = spec.outputs[0]
    for i, term in enumerate(y.elements):
        expected = T.add(T.elem(1, "x1", i), T.elem(2, "x2", i))
        assert T.canon(term) is T.canon(expected)


SOFTMAX_ROW3 = """
kernel softmax_row(y: out real[3], x: in real[3]) grid(1) block(4, live = 3) {
    row = load(x + arange(0, 4))
    safe = row - max(row)
    num = exp(safe)
    out = num / sum(num)
    store(y + arange(0, 4), out)
}
"""


def test_softmax_row_of_three_matches_walkthrough():
    """One row of 3 live columns reproduces the pointwise softmax equation."""
    mod = K.parse_kernel(SOFTMAX_ROW3)
    env = default_shape(mod)
    spec = execute(mod, env)
    y = spec.outputs[0]
    assert len(y.elements) == 3

    xs = [T.elem(1, "x", i) for i in range(3)]
    m = T.max_fold(xs)
    den = T.sum_fold([T.fn("exp", T.sub(x, m)) for x in xs])
    for i in range(3):
        expected = T.div(T.fn("exp", T.sub(xs[i], m)), den)
        assert T.canon(y.elements[i]) is T.canon(expected)
        assert y.elements[i].kind == "div"
        assert y.elements[i].args[0].kind == "fn" and y.elements[i].args[0].payload == "exp"

    # numeric sanity: elements sum to 1
    binding = {xs[i].payload: Fraction(i + 1, 2) for i in range(3)}
    total = sum(float(T.substitute(e, binding)) for e in y.elements)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_effect_disjointness_violation():
    src = ("kernel clash(y: out real[4], x: in real[8], n: int = 8) grid(n / 4) block(4) {\n"
           "    store(y + arange(0, 4), load(x + program_id * 4 + arange(0, 4)))\n}")
    mod = K.parse_kernel(src)
    env = resolve_shapes(mod, {"n": 8})
    with pytest.raises(ExecError, match="written by thread 0 and thread 1"):
        execute(mod, env)


def test_out_of_bounds_load():
    src = ("kernel oob(y: out real[4], x: in real[4]) grid(1) block(4) {\n"
           "    store(y + arange(0, 4), load(x + 2 + arange(0, 4)))\n}")
    mod = K.parse_kernel(src)
    with pytest.raises(ExecError, match="out of bounds"):
        execute(mod, default_shape(mod))


def test_unwritten_output_detected():
    src = ("kernel partial(y: out real[8], x: in real[4]) grid(1) block(4) {\n"
           "    store(y + arange(0, 4), load(x + arange(0, 4)))\n}")
    mod = K.parse_kernel(src)
    with pytest.raises(ExecError, match="never-written"):
        execute(mod, default_shape(mod))


def test_default_shapes(kernels):
    _, env, _ = kernels["softmax"]
    assert env.dims["x"] == (2, 4) and env.grid == 2
    _, env, _ = kernels["add"]
    assert env.dims["x1"] == (8,) and env.grid == 2
    _, env, _ = kernels["matmul"]
    assert env.dims["a"] == (4, 4) and env.dims["b"] == (4, 4)


GLOBAL_SUM = """
kernel global_sum(y: out real[1], x: in real[n], n: int = 4) grid(1) block(4) {
    s = sum(load(x + arange(0, 4)))
    store(y, s)
}
"""

ROW_SUM = """
kernel row_sum(y: out real[n / 4], x: in real[n / 4, 4], n: int) grid(n / 4) block(4) {
    s = sum(load(x + program_id * 4 + arange(0, 4)))
    store(y + program_id, s)
}
"""


def test_two_row_shape_distinguishes_global_from_row_reduction():
    """The distinguishability oracle behind the 2x4 default shape: at one row
    the two kernels produce identical output terms, at two rows they differ."""
    gmod = K.parse_kernel(GLOBAL_SUM)
    rmod = K.parse_kernel(ROW_SUM)
    g1 = execute(gmod, resolve_shapes(gmod, {"n": 4})).outputs[0]
    r1 = execute(rmod, resolve_shapes(rmod, {"n": 4})).outputs[0]
    assert [T.canon(e) for e in g1.elements] == [T.canon(e) for e in r1.elements]

    r2 = execute(rmod, resolve_shapes(rmod, {"n": 8})).outputs[0]
    assert len(r2.elements) == 2
    assert T.canon(r2.elements[0]) is not T.canon(r2.elements[1])
    # row_sum's default shape is exactly the distinguishing one
    assert default_shape(rmod).dims["x"] == (2, 4)


def test_symbolic_vs_concrete_exact(kernels):
    """Substituting the LiftSpec equals concrete interpretation, exactly."""
    rng = random.Random(7)
    for name, (mod, env, spec) in kernels.items():
        for _ in range(5):  # the acceptance suite runs the full 50
            inputs = {}
            binding = {}
            for t in spec.inputs:
                vals = [Fraction(rng.randrange(20, 300), 99) for _ in t.elements]
                inputs[t.name] = vals
                for i, v in enumerate(vals):
                    binding[(t.pos, t.name, i)] = v
            got = run_concrete(mod, env, inputs)
            for out in spec.outputs:
                for i, term in enumerate(out.elements):
                    assert T.substitute(term, binding) == got[out.name][i], name


def test_thread_order_independence_of_spec(kernels):
    from klift.interp import SymbolicDomain, run_grid

    for name in ("softmax", "add", "matmul"):
        mod, env, spec = kernels[name]
        rev = run_grid(mod, SymbolicDomain(), env.sizes, env.scalars, env.grid,
                       order=list(reversed(range(env.grid))))
        for out in spec.outputs:
            assert tuple(rev.cells[out.name]) == out.elements


def test_spec_json_dump(kernels):
    import json

    _, _, spec = kernels["add"]
    doc = json.loads(spec_to_json(spec))
    assert doc["outputs"]["y"]["elements"][0] == "x1[0] + x2[0]"
    assert doc["inputs"]["x1"]["dims"] == [8]
