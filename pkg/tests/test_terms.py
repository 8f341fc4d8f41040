"""Symbolic term algebra: canonicalization, substitution, leaf analysis."""

from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from klift import terms as T


def test_canon_constant_folding():
    x = T.elem(0, "x", 0)
    t = T.add(T.add(T.const(2), x), T.const(3))
    c = T.canon(t)
    # (2 + x) + 3 -> x + 5
    assert c.kind == "add"
    assert c.args[0] is x
    assert c.args[1] is T.const(5)


def test_canon_commutative_sort():
    a = T.elem(0, "a", 0)
    b = T.elem(1, "b", 0)
    assert T.canon(T.mul(b, a)) is T.canon(T.mul(a, b))
    assert T.canon(T.mul(a, b)).args[0] is a


def test_canon_sub_normalization():
    # exp(x1 - m) keeps its shape apart from the x1 + (-m) normalization
    x1 = T.elem(0, "x", 1)
    m = T.max_fold([T.elem(0, "x", i) for i in range(3)])
    t = T.fn("exp", T.sub(x1, m))
    c = T.canon(t)
    assert c.kind == "fn" and c.payload == "exp"
    arg = c.args[0]
    assert arg.kind == "add"
    assert arg.args[0] is x1
    assert arg.args[1].kind == "neg"


def test_canon_identities():
    x = T.elem(0, "x", 0)
    assert T.canon(T.add(x, T.const(0))) is x
    assert T.canon(T.mul(x, T.const(1))) is x
    assert T.canon(T.mul(x, T.const(0))) is T.const(0)
    assert T.canon(T.neg(T.neg(x))) is x


def test_substitute_basics():
    x = T.elem(0, "x", 0)
    y = T.elem(1, "y", 0)
    t = T.add(x, y)
    assert T.substitute(t, {x.payload: Fraction(1), y.payload: Fraction(2)}) == 3


def test_substitute_exp_zero():
    assert T.substitute(T.fn("exp", T.const(0)), {}) == 1.0


def test_substitute_division_by_zero():
    x = T.elem(0, "x", 0)
    t = T.div(T.const(1), x)
    with pytest.raises(T.EvalDomainError, match="division by zero"):
        T.substitute(t, {x.payload: Fraction(0)})


def test_substitute_log_domain():
    x = T.elem(0, "x", 0)
    with pytest.raises(T.EvalDomainError):
        T.substitute(T.fn("log", x), {x.payload: Fraction(-1)})


def test_leaves_examples():
    a0 = T.elem(0, "a", 0)
    b0 = T.elem(1, "b", 0)
    ls = T.leaves(T.add(a0, b0))
    assert ls.elems == {a0.payload, b0.payload}
    assert ls.consts == frozenset()

    x2 = T.elem(0, "x", 2)
    ls = T.leaves(T.mul(T.const(Fraction(1, 100)), x2))
    assert ls.elems == {x2.payload}
    assert ls.consts == {Fraction(1, 100)}

    ls = T.leaves(T.const(5))
    assert ls.elems == frozenset() and ls.consts == {Fraction(5)}


def test_format_fraction():
    assert T.format_fraction(Fraction(1, 100)) == "0.01"
    assert T.format_fraction(Fraction(-3, 2)) == "-1.5"
    assert T.format_fraction(Fraction(1, 3)) == "1/3"
    assert T.format_fraction(Fraction(7)) == "7"


# --- property tests ---

_leaf = st.sampled_from([T.elem(0, "x", i) for i in range(3)]
                        + [T.elem(1, "y", i) for i in range(2)])
_const = st.integers(-4, 4).map(lambda n: T.const(Fraction(n, 2)))


def _terms(depth: int):
    if depth == 0:
        return st.one_of(_leaf, _const)
    sub = _terms(depth - 1)
    return st.one_of(
        _leaf,
        _const,
        st.tuples(sub, sub).map(lambda ab: T.add(*ab)),
        st.tuples(sub, sub).map(lambda ab: T.mul(*ab)),
        st.tuples(sub, sub).map(lambda ab: T.sub(*ab)),
        sub.map(T.neg),
        sub.map(lambda t: T.fn("exp", t)),
        st.tuples(sub, sub, sub).map(lambda abc: T.ite(T.cmp("gt", abc[0], abc[1]), abc[1], abc[2])),
    )


_bindings = st.fixed_dictionaries(
    {(0, "x", i): st.integers(-50, 50).map(lambda n: Fraction(n, 7)) for i in range(3)}
    | {(1, "y", i): st.integers(-50, 50).map(lambda n: Fraction(n, 7)) for i in range(2)}
)


@settings(max_examples=200, deadline=None)
@given(_terms(3))
def test_canon_idempotent(t):
    c = T.canon(t)
    assert T.canon(c) is c


@settings(max_examples=200, deadline=None)
@given(_terms(3), _bindings)
def test_canon_value_preserving(t, binding):
    try:
        before = T.substitute(t, binding)
        after = T.substitute(T.canon(t), binding)
    except (T.EvalDomainError, OverflowError):
        return
    if isinstance(before, Fraction) and isinstance(after, Fraction):
        assert before == after
    else:
        assert abs(float(before) - float(after)) <= 1e-9 * max(1.0, abs(float(before)))


@settings(max_examples=150, deadline=None)
@given(_terms(2), _terms(2), _bindings)
def test_interning_soundness(a, b, binding):
    # shared canonical id implies agreement under every binding
    if T.canon(a) is T.canon(b):
        try:
            va = T.substitute(a, binding)
            vb = T.substitute(b, binding)
        except (T.EvalDomainError, OverflowError):
            return
        assert float(va) == pytest.approx(float(vb), abs=1e-12)
