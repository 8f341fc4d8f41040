"""Scalar symbolic terms over tensor elements.

Terms are the currency of the whole pipeline: the symbolic executor produces
them, the synthesizer compares candidate programs against them, and the
verifier turns them into logic.  Every term is hash-consed through a global
interner, so structural equality is pointer equality on ``uid``.

Numbers inside terms are exact ``Fraction`` values; floats only appear when a
term containing an uninterpreted function (exp, log, ...) is evaluated
numerically.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Mapping

FN_NAMES = ("exp", "log", "sin", "cos", "sqrt", "tanh", "abs")

# kind tags, also the coarse structural order used when sorting chains
_KIND_RANK = {
    "const": 0,
    "elem": 1,
    "neg": 2,
    "fn": 3,
    "add": 4,
    "mul": 5,
    "div": 6,
    "ite": 7,
    "cmp": 8,
    "bool": 9,
}

CMP_RELS = ("gt", "ge", "eq")


class EvalDomainError(ArithmeticError):
    """Raised when numeric substitution hits a partial-function domain."""


@dataclass(frozen=True, eq=False)
class SymTerm:
    uid: int
    kind: str
    # const: (Fraction,)        elem: (pos, tensor, index)
    # neg/fn: (childs...)       fn payload holds the function name
    # add/mul/div: (l, r)       ite: (cond, a, b)   cmp: (l, r) with rel
    payload: object
    args: tuple["SymTerm", ...]

    def __hash__(self) -> int:
        return self.uid

    def __eq__(self, other: object) -> bool:
        return self is other

    def __repr__(self) -> str:
        return f"<{pretty(self)}>"


class _Interner:
    """Append-only hash-cons table; safe to share between threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._table: dict[tuple, SymTerm] = {}

    def intern(self, kind: str, payload: object, args: tuple[SymTerm, ...]) -> SymTerm:
        key = (kind, payload, tuple(a.uid for a in args))
        hit = self._table.get(key)
        if hit is not None:
            return hit
        with self._lock:
            hit = self._table.get(key)
            if hit is None:
                hit = SymTerm(len(self._table), kind, payload, args)
                self._table[key] = hit
            return hit

    def __len__(self) -> int:
        return len(self._table)


_INTERNER = _Interner()


def interner_size() -> int:
    return len(_INTERNER)


# ---------------------------------------------------------------------------
# constructors


def const(value) -> SymTerm:
    if not isinstance(value, Fraction):
        value = Fraction(value)
    return _INTERNER.intern("const", value, ())


def elem(pos: int, tensor: str, index: int) -> SymTerm:
    """Element leaf. ``pos`` is the tensor's parameter position (ordering key)."""
    return _INTERNER.intern("elem", (pos, tensor, index), ())


def neg(t: SymTerm) -> SymTerm:
    return _INTERNER.intern("neg", None, (t,))


def fn(name: str, t: SymTerm) -> SymTerm:
    if name not in FN_NAMES:
        raise ValueError(f"unknown function {name!r}")
    return _INTERNER.intern("fn", name, (t,))


def add(l: SymTerm, r: SymTerm) -> SymTerm:
    return _INTERNER.intern("add", None, (l, r))


def mul(l: SymTerm, r: SymTerm) -> SymTerm:
    return _INTERNER.intern("mul", None, (l, r))


def div(l: SymTerm, r: SymTerm) -> SymTerm:
    return _INTERNER.intern("div", None, (l, r))


def sub(l: SymTerm, r: SymTerm) -> SymTerm:
    return add(l, neg(r))


def ite(cond: SymTerm, a: SymTerm, b: SymTerm) -> SymTerm:
    if cond.kind not in ("cmp", "bool"):
        raise ValueError("ite condition must be a comparison")
    return _INTERNER.intern("ite", None, (cond, a, b))


def cmp(rel: str, l: SymTerm, r: SymTerm) -> SymTerm:
    # lt/le are flipped so only gt/ge/eq exist in the algebra
    if rel == "lt":
        rel, l, r = "gt", r, l
    elif rel == "le":
        rel, l, r = "ge", r, l
    if rel not in CMP_RELS:
        raise ValueError(f"unknown relation {rel!r}")
    return _INTERNER.intern("cmp", rel, (l, r))


def boolop(op: str, *args: SymTerm) -> SymTerm:
    if op not in ("and", "or", "not"):
        raise ValueError(f"unknown boolean op {op!r}")
    return _INTERNER.intern("bool", op, args)


ZERO = const(0)
ONE = const(1)


def max_fold(values: list[SymTerm]) -> SymTerm:
    """Left fold of binary max expanded to nested ite, the solver-friendly form."""
    acc = values[0]
    for v in values[1:]:
        acc = ite(cmp("gt", acc, v), acc, v)
    return acc


def sum_fold(values: list[SymTerm]) -> SymTerm:
    acc = values[0]
    for v in values[1:]:
        acc = add(acc, v)
    return acc


# ---------------------------------------------------------------------------
# structural order (deterministic across processes, unlike uid order)


def term_key(t: SymTerm) -> tuple:
    rank = _KIND_RANK[t.kind]
    if t.kind == "const":
        return (rank, t.payload)
    if t.kind == "elem":
        return (rank, t.payload)
    head = (rank, t.payload if isinstance(t.payload, str) else "")
    return head + tuple(term_key(a) for a in t.args)


# ---------------------------------------------------------------------------
# canonicalization


def canon(t: SymTerm) -> SymTerm:
    """Local canonical form: constant folding, sorted commutative chains,
    and x−y ⇒ x+(−y) normalization. Idempotent and value-preserving."""
    return _canon_memo(t, {})


def _canon_memo(t: SymTerm, memo: dict[int, SymTerm]) -> SymTerm:
    hit = memo.get(t.uid)
    if hit is not None:
        return hit
    out = _canon_node(t, memo)
    memo[t.uid] = out
    return out


def _canon_node(t: SymTerm, memo) -> SymTerm:
    k = t.kind
    if k in ("const", "elem"):
        return t
    if k == "neg":
        a = _canon_memo(t.args[0], memo)
        if a.kind == "const":
            return const(-a.payload)
        if a.kind == "neg":
            return a.args[0]
        return neg(a)
    if k == "fn":
        return fn(t.payload, _canon_memo(t.args[0], memo))
    if k in ("add", "mul"):
        items: list[SymTerm] = []
        acc = Fraction(0) if k == "add" else Fraction(1)
        for part in _chain_iter(t, k):
            p = _canon_memo(part, memo)
            # canonicalized subchains re-flatten (e.g. (a+b)+c built post-canon)
            for q in _chain_iter(p, k) if p.kind == k else (p,):
                if q.kind == "const":
                    acc = acc + q.payload if k == "add" else acc * q.payload
                else:
                    items.append(q)
        if k == "mul" and acc == 0:
            return ZERO
        items.sort(key=term_key)
        neutral = Fraction(0) if k == "add" else Fraction(1)
        if acc != neutral:
            items.append(const(acc))
        if not items:
            return const(neutral)
        build = add if k == "add" else mul
        out = items[-1]
        for it in reversed(items[:-1]):
            out = build(it, out)
        return out
    if k == "div":
        l = _canon_memo(t.args[0], memo)
        r = _canon_memo(t.args[1], memo)
        if l.kind == "const" and r.kind == "const" and r.payload != 0:
            return const(l.payload / r.payload)
        return div(l, r)
    if k == "ite":
        c, a, b = (_canon_memo(x, memo) for x in t.args)
        if a is b:
            return a
        return ite(c, a, b)
    if k == "cmp":
        l = _canon_memo(t.args[0], memo)
        r = _canon_memo(t.args[1], memo)
        return cmp(t.payload, l, r)
    if k == "bool":
        return boolop(t.payload, *(_canon_memo(a, memo) for a in t.args))
    raise AssertionError(k)


def _chain_iter(t: SymTerm, op: str) -> Iterator[SymTerm]:
    if t.kind == op:
        yield from _chain_iter(t.args[0], op)
        yield from _chain_iter(t.args[1], op)
    else:
        yield t


def chain(t: SymTerm, op: str) -> list[SymTerm]:
    """Flatten the (canonical) binary chain of ``op`` rooted at ``t``."""
    return list(_chain_iter(t, op))


# ---------------------------------------------------------------------------
# evaluation

Number = Fraction | float


def _promote(x: Number, y: Number) -> bool:
    return isinstance(x, float) or isinstance(y, float)


_FN_IMPL = {
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "tanh": math.tanh,
}


def apply_fn(name: str, x: Number) -> Number:
    """Reference real-valued implementation of the uninterpreted functions.

    abs stays exact on rationals; everything else drops to float.
    """
    if name == "abs":
        return abs(x)
    xf = float(x)
    if name == "log":
        if xf <= 0:
            raise EvalDomainError(f"log of non-positive value {xf}")
        return math.log(xf)
    if name == "sqrt":
        if xf < 0:
            raise EvalDomainError(f"sqrt of negative value {xf}")
        return math.sqrt(xf)
    try:
        return _FN_IMPL[name](xf)
    except OverflowError as e:
        raise EvalDomainError(str(e)) from None


def substitute(t: SymTerm, binding: Mapping[tuple, Number]) -> Number:
    """Fully evaluate ``t`` under element values.

    ``binding`` maps elem payloads ``(pos, tensor, index)`` to numbers.
    Arithmetic stays exact (Fraction) until an uninterpreted function forces
    floats; both the symbolic and concrete evaluation paths share this tower,
    so their results are bit-identical.
    """
    memo: dict[int, object] = {}
    return _subst(t, binding, memo)


def _subst(t: SymTerm, binding, memo) -> object:
    hit = memo.get(t.uid)
    if hit is not None:
        return hit
    k = t.kind
    if k == "const":
        v: object = t.payload
    elif k == "elem":
        try:
            v = binding[t.payload]
        except KeyError:
            raise KeyError(f"no binding for element {t.payload}") from None
    elif k == "neg":
        v = -_subst(t.args[0], binding, memo)
    elif k == "fn":
        v = apply_fn(t.payload, _subst(t.args[0], binding, memo))
    elif k == "add":
        v = _subst(t.args[0], binding, memo) + _subst(t.args[1], binding, memo)
    elif k == "mul":
        v = _subst(t.args[0], binding, memo) * _subst(t.args[1], binding, memo)
    elif k == "div":
        num = _subst(t.args[0], binding, memo)
        den = _subst(t.args[1], binding, memo)
        if den == 0:
            raise EvalDomainError("division by zero")
        v = num / den if _promote(num, den) else Fraction(num) / Fraction(den)
    elif k == "ite":
        v = (
            _subst(t.args[1], binding, memo)
            if _subst(t.args[0], binding, memo)
            else _subst(t.args[2], binding, memo)
        )
    elif k == "cmp":
        l = _subst(t.args[0], binding, memo)
        r = _subst(t.args[1], binding, memo)
        v = {"gt": l > r, "ge": l >= r, "eq": l == r}[t.payload]
    elif k == "bool":
        vals = [_subst(a, binding, memo) for a in t.args]
        v = {
            "and": all(vals),
            "or": any(vals),
            "not": not vals[0],
        }[t.payload]
    else:
        raise AssertionError(k)
    memo[t.uid] = v
    return v


# ---------------------------------------------------------------------------
# leaf analysis


@dataclass(frozen=True)
class LeafSet:
    elems: frozenset
    consts: frozenset

    def __le__(self, other: "LeafSet") -> bool:
        return self.elems <= other.elems and self.consts <= other.consts


def leaves(t: SymTerm) -> LeafSet:
    es: set = set()
    cs: set = set()
    seen: set[int] = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur.uid in seen:
            continue
        seen.add(cur.uid)
        if cur.kind == "elem":
            es.add(cur.payload)
        elif cur.kind == "const":
            cs.add(cur.payload)
        else:
            stack.extend(cur.args)
    return LeafSet(frozenset(es), frozenset(cs))


def elem_leaves(t: SymTerm) -> frozenset:
    return leaves(t).elems


# ---------------------------------------------------------------------------
# printing


_REL_SYM = {"gt": ">", "ge": ">=", "eq": "=="}


def pretty(t: SymTerm) -> str:
    k = t.kind
    if k == "const":
        return format_fraction(t.payload)
    if k == "elem":
        _, tensor, index = t.payload
        return f"{tensor}[{index}]"
    if k == "neg":
        return f"-{_paren(t.args[0])}"
    if k == "fn":
        return f"{t.payload}({pretty(t.args[0])})"
    if k == "add":
        parts = [pretty(p) for p in chain(t, "add")]
        return " + ".join(parts)
    if k == "mul":
        return " * ".join(_paren(p) for p in chain(t, "mul"))
    if k == "div":
        return f"{_paren(t.args[0])} / {_paren(t.args[1])}"
    if k == "ite":
        c, a, b = t.args
        return f"ite({pretty(c)}, {pretty(a)}, {pretty(b)})"
    if k == "cmp":
        return f"{_paren(t.args[0])} {_REL_SYM[t.payload]} {_paren(t.args[1])}"
    if k == "bool":
        if t.payload == "not":
            return f"not {_paren(t.args[0])}"
        return f" {t.payload} ".join(_paren(a) for a in t.args)
    raise AssertionError(k)


def _paren(t: SymTerm) -> str:
    if t.kind in ("const", "elem", "fn", "ite"):
        return pretty(t)
    return f"({pretty(t)})"


def format_fraction(q: Fraction) -> str:
    """Exact decimal when the denominator is 2^a·5^b, fraction otherwise."""
    if q.denominator == 1:
        return str(q.numerator)
    den, twos, fives = q.denominator, 0, 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{q.numerator}/{q.denominator}"
    k = max(twos, fives)
    scaled = abs(q.numerator) * 10**k // q.denominator
    sign = "-" if q < 0 else ""
    digits = str(scaled).rjust(k + 1, "0")
    return f"{sign}{digits[:-k]}.{digits[-k:]}"
