"""The high-level tensor formula language (the lifted artifact).

Formulas are elementwise programs over whole tensors with row-wise reductions,
matmul, 2-D transpose, and a positive-test conditional.  A formula is
evaluated against a LiftSpec by indexing: every node knows how to produce the
scalar at a given multi-index, which gives us symbolic evaluation (SymTerm
algebra), numeric evaluation (float algebra), and the pointwise form the
verifier needs, all from one walker.

Shapes follow numpy-style trailing broadcast; Reduce keeps the reduced axis
as 1 so per-row denominators broadcast cleanly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from . import terms as T


@dataclass(frozen=True)
class Input:
    name: str


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class NamedConst:
    key: str


@dataclass(frozen=True)
class Bin:
    op: str  # + - * /
    l: "Formula"
    r: "Formula"


@dataclass(frozen=True)
class Neg:
    f: "Formula"


@dataclass(frozen=True)
class Fn:
    name: str
    f: "Formula"


@dataclass(frozen=True)
class Reduce:
    kind: str  # sum | max
    f: "Formula"


@dataclass(frozen=True)
class MatMul:
    l: "Formula"
    r: "Formula"


@dataclass(frozen=True)
class Transpose:
    f: "Formula"


@dataclass(frozen=True)
class IfPos:
    cond: "Formula"
    then: "Formula"
    other: "Formula"


Formula = Input | Const | NamedConst | Bin | Neg | Fn | Reduce | MatMul | Transpose | IfPos


NAMED_CONSTANTS = {
    "log2e": ("log2(e)", math.log2(math.e)),
    "ln2": ("ln(2)", math.log(2.0)),
    "e": ("e", math.e),
    "pi": ("pi", math.pi),
    "sqrt_2_over_pi": ("sqrt(2/pi)", math.sqrt(2.0 / math.pi)),
    "inv_sqrt_2pi": ("1/sqrt(2*pi)", 1.0 / math.sqrt(2.0 * math.pi)),
}


# ---------------------------------------------------------------------------
# shape analysis


def broadcast(a: tuple | None, b: tuple | None) -> tuple | None:
    if a is None or b is None:
        return None
    out = []
    for x, y in itertools.zip_longest(reversed(a), reversed(b), fillvalue=1):
        if x == y or y == 1:
            out.append(x)
        elif x == 1:
            out.append(y)
        else:
            return None
    return tuple(reversed(out))


def shape_of(f: Formula, dims: dict) -> tuple | None:
    """Shape under the given input dims; None means ill-typed."""
    match f:
        case Input(name):
            return dims.get(name)
        case Const() | NamedConst():
            return ()
        case Bin(_, l, r):
            return broadcast(shape_of(l, dims), shape_of(r, dims))
        case Neg(x) | Fn(_, x):
            return shape_of(x, dims)
        case Reduce(_, x):
            s = shape_of(x, dims)
            if s is None or len(s) != 2:
                return None
            return (s[0], 1)
        case MatMul(l, r):
            sl, sr = shape_of(l, dims), shape_of(r, dims)
            if sl is None or sr is None or len(sl) != 2 or len(sr) != 2 or sl[1] != sr[0]:
                return None
            return (sl[0], sr[1])
        case Transpose(x):
            s = shape_of(x, dims)
            if s is None or len(s) != 2:
                return None
            return (s[1], s[0])
        case IfPos(c, a, b):
            return broadcast(broadcast(shape_of(c, dims), shape_of(a, dims)), shape_of(b, dims))
    raise AssertionError(f)


def squeeze(shape: tuple) -> tuple:
    while shape and shape[-1] == 1:
        shape = shape[:-1]
    return shape


def shape_matches_output(shape: tuple | None, out_dims: tuple) -> bool:
    return shape is not None and squeeze(shape) == squeeze(out_dims)


# ---------------------------------------------------------------------------
# indexed evaluation


class TermAlgebra:
    """SymTerm-valued evaluation; leaves come from a LiftSpec-style mapping."""

    def __init__(self, tensors: dict):
        # tensors: name -> SymbolicTensor (pos, dims, flat elements)
        self.tensors = tensors

    def leaf(self, name: str, flat: int):
        t = self.tensors[name]
        return t.elements[flat]

    def const(self, q: Fraction):
        return T.const(q)

    def named(self, key: str):
        raise ValueError(f"named constant {key} has no exact value")

    neg = staticmethod(T.neg)
    fn = staticmethod(T.fn)

    def bin(self, op, l, r):
        return {"+": T.add, "-": T.sub, "*": T.mul, "/": T.div}[op](l, r)

    sum_fold = staticmethod(T.sum_fold)
    max_fold = staticmethod(T.max_fold)

    def ifpos(self, c, a, b):
        return T.ite(T.cmp("gt", c, T.ZERO), a, b)


class NumberAlgebra:
    """Exactish numeric evaluation, same tower as terms.substitute."""

    def __init__(self, arrays: dict):
        self.arrays = arrays  # name -> flat list of numbers

    def leaf(self, name: str, flat: int):
        return self.arrays[name][flat]

    def const(self, q: Fraction):
        return q

    def named(self, key: str):
        return NAMED_CONSTANTS[key][1]

    def neg(self, x):
        return -x

    def fn(self, name, x):
        return T.apply_fn(name, x)

    def bin(self, op, l, r):
        if op == "+":
            return l + r
        if op == "-":
            return l - r
        if op == "*":
            return l * r
        if r == 0:
            raise T.EvalDomainError("division by zero")
        if isinstance(l, float) or isinstance(r, float):
            return l / r
        return Fraction(l) / Fraction(r)

    def sum_fold(self, items):
        acc = items[0]
        for x in items[1:]:
            acc = acc + x
        return acc

    def max_fold(self, items):
        acc = items[0]
        for x in items[1:]:
            acc = acc if acc > x else x
        return acc

    def ifpos(self, c, a, b):
        return a if c > 0 else b


def _child_index(idx: tuple, parent_shape: tuple, child_shape: tuple) -> tuple:
    """Map a parent multi-index through trailing broadcast onto a child."""
    if child_shape == parent_shape:
        return idx
    off = len(parent_shape) - len(child_shape)
    out = []
    for d, size in enumerate(child_shape):
        out.append(0 if size == 1 else idx[off + d])
    return tuple(out)


def _flatten(idx: tuple, dims: tuple):
    flat = 0
    for i, d in zip(idx, dims):
        flat = flat * d + i
    return flat


class Evaluator:
    """Evaluate formulas pointwise over any algebra.

    Index components may be plain ints or affine LinIdx values; only the
    flattening arithmetic touches them, so the verifier reuses this walker
    with a symbolic thread id.

    Formulas put through an evaluator are pinned (a strong reference is kept),
    which makes id()-keyed memo tables safe and cheap.
    """

    def __init__(self, dims: dict, algebra):
        self.dims = dims
        self.algebra = algebra
        self._memo: dict = {}
        self._pins: dict[int, Formula] = {}
        self._shapes: dict[int, tuple | None] = {}

    def _pin(self, f: Formula) -> int:
        fid = id(f)
        if fid not in self._pins:
            self._pins[fid] = f
        return fid

    def shape(self, f: Formula) -> tuple | None:
        fid = self._pin(f)
        if fid in self._shapes:
            return self._shapes[fid]
        match f:
            case Input(name):
                s = self.dims.get(name)
            case Const() | NamedConst():
                s = ()
            case Bin(_, l, r):
                s = broadcast(self.shape(l), self.shape(r))
            case Neg(x) | Fn(_, x):
                s = self.shape(x)
            case Reduce(_, x):
                sx = self.shape(x)
                s = (sx[0], 1) if sx is not None and len(sx) == 2 else None
            case MatMul(l, r):
                sl, sr = self.shape(l), self.shape(r)
                ok = (sl is not None and sr is not None and len(sl) == 2
                      and len(sr) == 2 and sl[1] == sr[0])
                s = (sl[0], sr[1]) if ok else None
            case Transpose(x):
                sx = self.shape(x)
                s = (sx[1], sx[0]) if sx is not None and len(sx) == 2 else None
            case IfPos(c, a, b):
                s = broadcast(broadcast(self.shape(c), self.shape(a)), self.shape(b))
            case _:
                raise AssertionError(f)
        self._shapes[fid] = s
        return s

    def at(self, f: Formula, idx: tuple):
        key = (self._pin(f), idx)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        out = self._at(f, idx)
        self._memo[key] = out
        return out

    def _at(self, f: Formula, idx: tuple):
        alg = self.algebra
        match f:
            case Input(name):
                return alg.leaf(name, _flatten(idx, self.dims[name]))
            case Const(q):
                return alg.const(q)
            case NamedConst(key):
                return alg.named(key)
            case Neg(x):
                return alg.neg(self.at(x, self._proj(f, x, idx)))
            case Fn(name, x):
                return alg.fn(name, self.at(x, self._proj(f, x, idx)))
            case Bin(op, l, r):
                return alg.bin(op, self.at(l, self._proj(f, l, idx)), self.at(r, self._proj(f, r, idx)))
            case Reduce(kind, x):
                xs = self.shape(x)
                row = idx[0]
                items = [self.at(x, (row, j)) for j in range(xs[1])]
                return alg.sum_fold(items) if kind == "sum" else alg.max_fold(items)
            case MatMul(l, r):
                k = self.shape(l)[1]
                i, j = idx
                prods = [
                    alg.bin("*", self.at(l, (i, m)), self.at(r, (m, j))) for m in range(k)
                ]
                return alg.sum_fold(prods)
            case Transpose(x):
                i, j = idx
                return self.at(x, (j, i))
            case IfPos(c, a, b):
                return alg.ifpos(
                    self.at(c, self._proj(f, c, idx)),
                    self.at(a, self._proj(f, a, idx)),
                    self.at(b, self._proj(f, b, idx)),
                )
        raise AssertionError(f)

    def _proj(self, parent: Formula, child: Formula, idx: tuple) -> tuple:
        return _child_index(idx, self.shape(parent), self.shape(child))

    def flat(self, f: Formula, out_dims: tuple | None = None) -> list:
        """All elements in row-major order, evaluated at out_dims (broadcast)."""
        shape = out_dims if out_dims is not None else self.shape(f)
        if shape is None:
            raise ValueError("ill-typed formula")
        own = self.shape(f)
        vals = []
        for idx in itertools.product(*(range(d) for d in shape)):
            vals.append(self.at(f, _child_index(idx, shape, own)))
        return vals


def eval_sym(f: Formula, spec) -> list:
    """Per-element SymTerms of ``f`` over a LiftSpec's symbolic inputs."""
    tensors = {t.name: t for t in spec.inputs}
    dims = {t.name: t.dims for t in spec.inputs}
    return Evaluator(dims, TermAlgebra(tensors)).flat(f)


def eval_numeric(f: Formula, dims: dict, arrays: dict, out_dims: tuple | None = None) -> list:
    return Evaluator(dims, NumberAlgebra(arrays)).flat(f, out_dims)


# ---------------------------------------------------------------------------
# structural measures


def depth(f: Formula) -> int:
    match f:
        case Input() | Const() | NamedConst():
            return 0
        case Transpose(x):
            return depth(x)  # transposes are terminals in the search
        case Neg(x) | Fn(_, x) | Reduce(_, x):
            return 1 + depth(x)
        case Bin(_, l, r) | MatMul(l, r):
            return 1 + max(depth(l), depth(r))
        case IfPos(c, a, b):
            return 1 + max(depth(c), depth(a), depth(b))
    raise AssertionError(f)


def node_count(f: Formula) -> int:
    match f:
        case Input() | Const() | NamedConst():
            return 1
        case Neg(x) | Fn(_, x) | Reduce(_, x) | Transpose(x):
            return 1 + node_count(x)
        case Bin(_, l, r) | MatMul(l, r):
            return 1 + node_count(l) + node_count(r)
        case IfPos(c, a, b):
            return 1 + node_count(c) + node_count(a) + node_count(b)
    raise AssertionError(f)


def alpha_key(f: Formula) -> tuple:
    """Canonical structural key, insensitive to commutative argument order."""
    match f:
        case Input(name):
            return ("input", name)
        case Const(q):
            return ("const", q)
        case NamedConst(key):
            return ("named", key)
        case Neg(x):
            return ("neg", alpha_key(x))
        case Fn(name, x):
            return ("fn", name, alpha_key(x))
        case Reduce(kind, x):
            return ("reduce", kind, alpha_key(x))
        case Transpose(x):
            return ("transpose", alpha_key(x))
        case MatMul(l, r):
            return ("matmul", alpha_key(l), alpha_key(r))
        case IfPos(c, a, b):
            return ("ifpos", alpha_key(c), alpha_key(a), alpha_key(b))
        case Bin(op, l, r):
            kl, kr = alpha_key(l), alpha_key(r)
            if op in ("+", "*"):
                kl, kr = sorted((kl, kr))
            return ("bin", op, kl, kr)
    raise AssertionError(f)


def equivalent_form(a: Formula, b: Formula) -> bool:
    """Alpha-equivalence modulo commutative ordering (golden comparisons)."""
    return alpha_key(a) == alpha_key(b)


def subformulas(f: Formula):
    yield f
    match f:
        case Neg(x) | Fn(_, x) | Reduce(_, x) | Transpose(x):
            yield from subformulas(x)
        case Bin(_, l, r) | MatMul(l, r):
            yield from subformulas(l)
            yield from subformulas(r)
        case IfPos(c, a, b):
            yield from subformulas(c)
            yield from subformulas(a)
            yield from subformulas(b)
        case _:
            pass


# ---------------------------------------------------------------------------
# text format


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def print_formula(f: Formula, parent_prec: int = 0) -> str:
    match f:
        case Input(name):
            return name
        case Const(q):
            return T.format_fraction(q)
        case NamedConst(key):
            return NAMED_CONSTANTS[key][0]
        case Neg(x):
            s = f"-{print_formula(x, 3)}"
            return f"({s})" if parent_prec >= 3 else s
        case Fn(name, x):
            return f"{name}({print_formula(x)})"
        case Reduce(kind, x):
            return f"{kind}({print_formula(x)})"
        case MatMul(l, r):
            return f"matmul({print_formula(l)}, {print_formula(r)})"
        case Transpose(x):
            return f"transpose({print_formula(x)})"
        case IfPos(c, a, b):
            return f"ifpos({print_formula(c)}, {print_formula(a)}, {print_formula(b)})"
        case Bin(op, l, r):
            prec = _PREC[op]
            s = f"{print_formula(l, prec - 1)} {op} {print_formula(r, prec)}"
            return f"({s})" if parent_prec >= prec else s
    raise AssertionError(f)


def to_latex(f: Formula) -> str:
    match f:
        case Input(name):
            return f"\\mathbf{{{name}}}"
        case Const(q):
            return T.format_fraction(q)
        case NamedConst(key):
            return {
                "log2e": "\\log_2 e", "ln2": "\\ln 2", "e": "e", "pi": "\\pi",
                "sqrt_2_over_pi": "\\sqrt{2/\\pi}", "inv_sqrt_2pi": "1/\\sqrt{2\\pi}",
            }[key]
        case Neg(x):
            return f"-{to_latex(x)}"
        case Fn(name, x):
            return f"\\{name}({to_latex(x)})" if name != "abs" else f"|{to_latex(x)}|"
        case Reduce("sum", x):
            return f"\\sum {to_latex(x)}"
        case Reduce("max", x):
            return f"\\max {to_latex(x)}"
        case MatMul(l, r):
            return f"{to_latex(l)} {to_latex(r)}"
        case Transpose(x):
            return f"{to_latex(x)}^T"
        case IfPos(c, a, b):
            return (f"\\begin{{cases}} {to_latex(a)} & {to_latex(c)} > 0 \\\\ "
                    f"{to_latex(b)} & \\text{{otherwise}} \\end{{cases}}")
        case Bin("/", l, r):
            return f"\\frac{{{to_latex(l)}}}{{{to_latex(r)}}}"
        case Bin(op, l, r):
            sym = {"+": "+", "-": "-", "*": " \\odot "}[op]
            return f"({to_latex(l)} {sym} {to_latex(r)})"
    raise AssertionError(f)


class FormulaParseError(ValueError):
    pass


def parse_formula(text: str) -> Formula:
    toks = _ftokens(text)
    pos = [0]

    def peek():
        return toks[pos[0]] if pos[0] < len(toks) else ("eof", "")

    def take(expect: str | None = None):
        kind, val = peek()
        if expect is not None and val != expect:
            raise FormulaParseError(f"expected {expect!r}, found {val!r}")
        pos[0] += 1
        return kind, val

    def expr(prec=0):
        node = unary()
        while True:
            kind, val = peek()
            if kind == "op" and val in _PREC and _PREC[val] > prec:
                take()
                rhs = expr(_PREC[val])
                node = Bin(val, node, rhs)
            else:
                return node

    def unary():
        kind, val = peek()
        if kind == "op" and val == "-":
            take()
            return Neg(unary())
        return primary()

    def primary():
        kind, val = take()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "lparen":
            node = expr()
            take(")")
            return node
        if kind == "name":
            if peek()[0] == "lparen":
                take("(")
                if val in ("sum", "max"):
                    node = Reduce(val, expr())
                    take(")")
                    return node
                if val in ("matmul",):
                    l = expr()
                    take(",")
                    r = expr()
                    take(")")
                    return MatMul(l, r)
                if val == "transpose":
                    node = Transpose(expr())
                    take(")")
                    return node
                if val == "ifpos":
                    c = expr()
                    take(",")
                    a = expr()
                    take(",")
                    b = expr()
                    take(")")
                    return IfPos(c, a, b)
                if val == "log2":
                    inner = expr()
                    take(")")
                    if inner == Input("e"):
                        return NamedConst("log2e")
                    raise FormulaParseError("log2 is only available as log2(e)")
                if val == "ln":
                    inner = expr()
                    take(")")
                    if inner == Const(Fraction(2)):
                        return NamedConst("ln2")
                    raise FormulaParseError("ln is only available as ln(2)")
                if val in T.FN_NAMES:
                    node = Fn(val, expr())
                    take(")")
                    return node
                raise FormulaParseError(f"unknown function {val!r}")
            return Input(val)
        raise FormulaParseError(f"unexpected token {val!r}")

    out = expr()
    if peek()[0] != "eof":
        raise FormulaParseError(f"trailing input at {peek()[1]!r}")
    return _recognize_named(out)


def _ftokens(text: str):
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not dot)):
                if text[j] == ".":
                    dot = True
                j += 1
            toks.append(("num", text[i:j]))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            toks.append(("name", text[i:j]))
            i = j
            continue
        if c == "(":
            toks.append(("lparen", "("))
        elif c == ")":
            toks.append(("rparen", ")"))
        elif c == ",":
            toks.append(("comma", ","))
        elif c in "+-*/":
            toks.append(("op", c))
        elif c == "⊙":
            toks.append(("op", "*"))
        else:
            raise FormulaParseError(f"unexpected character {c!r}")
        i += 1
    return toks


def _recognize_named(f: Formula) -> Formula:
    """Fold compound spellings of dictionary constants into NamedConst nodes."""

    def walk(g: Formula) -> Formula:
        match g:
            case Bin(op, l, r):
                g = Bin(op, walk(l), walk(r))
            case Neg(x):
                g = Neg(walk(x))
            case Fn(name, x):
                g = Fn(name, walk(x))
            case Reduce(kind, x):
                g = Reduce(kind, walk(x))
            case MatMul(l, r):
                g = MatMul(walk(l), walk(r))
            case Transpose(x):
                g = Transpose(walk(x))
            case IfPos(c, a, b):
                g = IfPos(walk(c), walk(a), walk(b))
            case Input("e"):
                return NamedConst("e")
            case Input("pi"):
                return NamedConst("pi")
            case _:
                return g
        if g == Fn("sqrt", Bin("/", Const(Fraction(2)), NamedConst("pi"))):
            return NamedConst("sqrt_2_over_pi")
        if g == Bin("/", Const(Fraction(1)), Fn("sqrt", Bin("*", Const(Fraction(2)), NamedConst("pi")))):
            return NamedConst("inv_sqrt_2pi")
        return g

    return walk(f)
