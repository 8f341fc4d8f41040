"""Pointwise logic forms of tensor formulas.

The verifier needs the synthesized program in three guises: as an SMT term
indexed by a symbolic flat index ``i`` (with row bases rendered through
``i // B * B`` like the quantified postconditions), as a human-readable
pointwise string, and as a SymTerm at a pid-affine index (for the thread
effect equivalence proof).  All three come from the same shape-directed
indexing scheme as formula.Evaluator.
"""

from __future__ import annotations

from fractions import Fraction

from . import formula as F
from . import terms as T
from .smt.script import rational


class AffineTermAlgebra:
    """SymTerm algebra whose leaves carry affine (pid-linear) flat indices."""

    def __init__(self, positions: dict[str, int]):
        self.positions = positions

    def leaf(self, name: str, flat):
        return T.elem(self.positions[name], name, flat)

    def const(self, q: Fraction):
        return T.const(q)

    neg = staticmethod(T.neg)
    fn = staticmethod(T.fn)

    def bin(self, op, l, r):
        return {"+": T.add, "-": T.sub, "*": T.mul, "/": T.div}[op](l, r)

    sum_fold = staticmethod(T.sum_fold)
    max_fold = staticmethod(T.max_fold)

    def ifpos(self, c, a, b):
        return T.ite(T.cmp("gt", c, T.ZERO), a, b)


# ---------------------------------------------------------------------------
# formula -> sexp at a symbolic flat index


def _flatten_sexp(multi: list, dims: tuple):
    # full-rank (i div C, i mod C) row-major flattening collapses back to i
    if (
        len(dims) == 2
        and len(multi) == 2
        and isinstance(multi[0], list)
        and isinstance(multi[1], list)
        and multi[0][:1] == ["div"]
        and multi[1][:1] == ["mod"]
        and multi[0][1] == multi[1][1]
        and multi[0][2] == multi[1][2] == str(dims[1])
    ):
        return multi[0][1]
    flat = None
    for comp, stride in zip(multi, _strides(dims)):
        part = comp if stride == 1 else ["*", comp, str(stride)]
        if comp == "0":
            continue
        flat = part if flat is None else ["+", flat, part]
    return flat if flat is not None else "0"


def _strides(dims: tuple) -> list[int]:
    out = []
    acc = 1
    for d in reversed(dims):
        out.append(acc)
        acc *= d
    return list(reversed(out))


def _project(multi: list, parent: tuple, child: tuple) -> list:
    off = len(parent) - len(child)
    out = []
    for d, size in enumerate(child):
        out.append("0" if size == 1 else multi[off + d])
    return out


class PointwiseBuilder:
    """Emit ``formula`` evaluated at a symbolic output position."""

    def __init__(self, dims: dict, out_dims: tuple):
        self.dims = dims
        self.out_dims = out_dims

    def shape(self, f: F.Formula) -> tuple:
        s = F.shape_of(f, self.dims)
        if s is None:
            raise ValueError("ill-typed formula")
        return s

    def at_flat(self, f: F.Formula, ivar: str = "i"):
        """Sexp of the formula's element at flat output index ``ivar``."""
        od = self.out_dims
        if len(od) == 1:
            multi = [ivar]
        elif len(od) == 2:
            multi = [["div", ivar, str(od[1])], ["mod", ivar, str(od[1])]]
        else:
            raise ValueError("outputs beyond 2-D are not supported")
        own = self.shape(f)
        return self._at(f, _project(multi, od, own) if own != od else multi)

    def _at(self, f: F.Formula, multi: list):
        match f:
            case F.Input(name):
                return ["select", name, _flatten_sexp(multi, self.dims[name])]
            case F.Const(q):
                return rational(q)
            case F.NamedConst(_):
                raise ValueError("named constants have no exact logic form")
            case F.Neg(x):
                return ["-", self._at(x, self._proj(f, x, multi))]
            case F.Fn(name, x):
                return [name, self._at(x, self._proj(f, x, multi))]
            case F.Bin(op, l, r):
                return [op if op != "*" else "*",
                        self._at(l, self._proj(f, l, multi)),
                        self._at(r, self._proj(f, r, multi))]
            case F.Reduce(kind, x):
                xs = self.shape(x)
                row = multi[0]
                items = [self._at(x, [row, str(j)]) for j in range(xs[1])]
                if kind == "sum":
                    acc = items[0]
                    for it in items[1:]:
                        acc = ["+", acc, it]
                    return acc
                acc = items[0]
                for it in items[1:]:
                    acc = ["ite", [">", acc, it], acc, it]
                return acc
            case F.MatMul(l, r):
                k = self.shape(l)[1]
                i, j = multi
                prods = [
                    ["*", self._at(l, [i, str(m)]), self._at(r, [str(m), j])]
                    for m in range(k)
                ]
                acc = prods[0]
                for p in prods[1:]:
                    acc = ["+", acc, p]
                return acc
            case F.Transpose(x):
                i, j = multi
                return self._at(x, [j, i])
            case F.IfPos(c, a, b):
                return ["ite", [">", self._at(c, self._proj(f, c, multi)), "0"],
                        self._at(a, self._proj(f, a, multi)),
                        self._at(b, self._proj(f, b, multi))]
        raise AssertionError(f)

    def _proj(self, parent: F.Formula, child: F.Formula, multi: list) -> list:
        return _project(multi, self.shape(parent), self.shape(child))


# ---------------------------------------------------------------------------
# infix rendering of index'd sexps (for reports and tests)


_INFIX = {"+": " + ", "-": " - ", "*": " * ", "/": " / ", "div": " // ", "mod": " % ",
          ">": " > ", ">=": " >= ", "<": " < ", "<=": " <= ", "=": " = "}


def render_sexp(e) -> str:
    if isinstance(e, str):
        return e
    head = e[0]
    if head == "select":
        return f"{e[1]}[{render_sexp(e[2])}]"
    if head == "ite":
        return f"ite({render_sexp(e[1])}, {render_sexp(e[2])}, {render_sexp(e[3])})"
    if head == "-" and len(e) == 2:
        return f"-{_wrap(e[1])}"
    if head in _INFIX:
        return _INFIX[head].join(_wrap(x) for x in e[1:])
    return f"{head}({', '.join(render_sexp(x) for x in e[1:])})"


def _wrap(e) -> str:
    s = render_sexp(e)
    if isinstance(e, list) and e[0] in ("+", "-", "*", "/") and len(e) > 2:
        return f"({s})"
    if isinstance(e, list) and e[0] == "-" and len(e) == 2:
        return f"({s})"
    return s
