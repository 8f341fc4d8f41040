"""Kernel evaluation engine.

One walker, three uses:

* symbolic execution with concrete thread ids -> LiftSpec (executor.py)
* concrete execution on numbers -> differential testing, soundness oracles
* symbolic execution with an *affine* thread id -> per-thread store effects
  as linear functions of pid (verifier.py)

Index arithmetic is always concrete integers, except in affine mode where a
pointer offset may be ``a*pid + b``.  Values live in a pluggable domain:
symbolic terms or exact-until-float numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import kernel as K
from . import terms as T


class ExecError(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


# ---------------------------------------------------------------------------
# affine index  a*pid + b


@dataclass(frozen=True)
class LinIdx:
    a: int
    b: int

    def __add__(self, other):
        if isinstance(other, int):
            return LinIdx(self.a, self.b + other)
        if isinstance(other, LinIdx):
            return LinIdx(self.a + other.a, self.b + other.b)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return LinIdx(-self.a, -self.b)

    def __sub__(self, other):
        return self + (-other if isinstance(other, (int, LinIdx)) else NotImplemented)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, int):
            return LinIdx(self.a * other, self.b * other)
        return NotImplemented

    __rmul__ = __mul__

    def at(self, pid: int) -> int:
        return self.a * pid + self.b


Index = int | LinIdx


def _idx_mul(l, r):
    if isinstance(l, int) and isinstance(r, int):
        return l * r
    if isinstance(l, LinIdx) and isinstance(r, int):
        return l * r
    if isinstance(l, int) and isinstance(r, LinIdx):
        return r * l
    raise ExecError("nonlinear-index", "product of two thread-dependent indices")


def _idx_div(l, r):
    if isinstance(l, int) and isinstance(r, int):
        if r == 0 or l % r != 0:
            raise ExecError("bad-division", f"non-exact integer division {l}/{r}")
        return l // r
    if isinstance(l, LinIdx) and isinstance(r, int) and r != 0 and l.a % r == 0 and l.b % r == 0:
        return LinIdx(l.a // r, l.b // r)
    raise ExecError("nonlinear-index", "thread-dependent index division")


# ---------------------------------------------------------------------------
# value wrappers


@dataclass
class VInt:
    v: Index


@dataclass
class VReal:
    v: object


@dataclass
class VVecInt:
    items: list


@dataclass
class VVecReal:
    items: list


@dataclass
class VPtr:
    tensor: str
    off: Index


@dataclass
class VVecPtr:
    tensor: str
    offs: list


@dataclass
class VCond:
    items: object  # domain bool/term, or list thereof


Value = VInt | VReal | VVecInt | VVecReal | VPtr | VVecPtr | VCond


# ---------------------------------------------------------------------------
# value domains


class SymbolicDomain:
    """Values are interned SymTerms."""

    def elem(self, pos: int, tensor: str, index) -> T.SymTerm:
        return T.elem(pos, tensor, index)

    def const(self, q: Fraction) -> T.SymTerm:
        return T.const(q)

    def neg(self, x):
        return T.neg(x)

    def add(self, l, r):
        return T.add(l, r)

    def sub(self, l, r):
        return T.sub(l, r)

    def mul(self, l, r):
        return T.mul(l, r)

    def div(self, l, r):
        return T.div(l, r)

    def fn(self, name, x):
        return T.fn(name, x)

    def cmp(self, rel, l, r):
        return T.cmp(rel, l, r)

    def where(self, c, a, b):
        return T.ite(c, a, b)

    def reduce_sum(self, items):
        return T.sum_fold(items)

    def reduce_max(self, items):
        return T.max_fold(items)


class ConcreteDomain:
    """Values are Fraction-until-float numbers; mirrors terms.substitute exactly."""

    def __init__(self, inputs: dict[str, list]):
        self.inputs = inputs

    def elem(self, pos: int, tensor: str, index):
        return self.inputs[tensor][index]

    def const(self, q: Fraction):
        return q

    def neg(self, x):
        return -x

    def add(self, l, r):
        return l + r

    def sub(self, l, r):
        return l - r

    def mul(self, l, r):
        return l * r

    def div(self, l, r):
        if r == 0:
            raise T.EvalDomainError("division by zero")
        if isinstance(l, float) or isinstance(r, float):
            return l / r
        return Fraction(l) / Fraction(r)

    def fn(self, name, x):
        return T.apply_fn(name, x)

    def cmp(self, rel, l, r):
        return {"gt": l > r, "ge": l >= r, "lt": l < r, "le": l <= r, "eq": l == r}[rel]

    def where(self, c, a, b):
        return a if c else b

    def reduce_sum(self, items):
        acc = items[0]
        for x in items[1:]:
            acc = acc + x
        return acc

    def reduce_max(self, items):
        acc = items[0]
        for x in items[1:]:
            acc = acc if acc > x else x
        return acc


# ---------------------------------------------------------------------------
# execution state


@dataclass
class Buffers:
    sizes: dict[str, int]
    cells: dict[str, list]
    written_by: dict[tuple[str, int], int]  # (tensor, index) -> pid

    @classmethod
    def fresh(cls, mod: K.KernelModule, sizes: dict[str, int], domain) -> "Buffers":
        cells: dict[str, list] = {}
        for pos, p in enumerate(mod.params):
            if p.kind == "tin":
                cells[p.name] = [domain.elem(pos, p.name, i) for i in range(sizes[p.name])]
            elif p.kind == "tout":
                cells[p.name] = [None] * sizes[p.name]
        return cls(sizes, cells, {})


class _Thread:
    def __init__(self, mod: K.KernelModule, domain, buffers: Buffers | None,
                 scalars: dict[str, int], pid: Index, collect_effects: bool = False):
        self.mod = mod
        self.domain = domain
        self.buffers = buffers
        self.scalars = scalars
        self.pid = pid
        self.locals: dict[str, Value] = {}
        self.collect_effects = collect_effects
        self.effects: list[tuple[str, Index, object]] = []
        self.param_pos = {p.name: i for i, p in enumerate(mod.params)}
        self.param_by_name = {p.name: p for p in mod.params}

    # --- coercion helpers ---

    def _as_real(self, v: Value):
        if isinstance(v, VReal):
            return v
        if isinstance(v, VVecReal):
            return v
        if isinstance(v, VInt):
            if isinstance(v.v, LinIdx):
                raise ExecError("pid-as-value", "thread id used as a tensor value")
            return VReal(self.domain.const(Fraction(v.v)))
        if isinstance(v, VVecInt):
            return VVecReal([self.domain.const(Fraction(x)) for x in v.items])
        raise ExecError("type", f"expected a value, got {type(v).__name__}")

    def _lanes(self, *vs: Value) -> int | None:
        n = None
        for v in vs:
            if isinstance(v, (VVecReal, VVecInt, VVecPtr)):
                ln = len(v.items if not isinstance(v, VVecPtr) else v.offs)
                if n is not None and ln != n:
                    raise ExecError("type", "vector length mismatch")
                n = ln
            elif isinstance(v, VCond) and isinstance(v.items, list):
                if n is not None and len(v.items) != n:
                    raise ExecError("type", "vector length mismatch")
                n = len(v.items)
        return n

    # --- expression evaluation ---

    def eval(self, e: K.KExpr) -> Value:
        match e:
            case K.IntLit(v):
                return VInt(v)
            case K.RealLit(v):
                return VReal(self.domain.const(v))
            case K.ProgramId():
                return VInt(self.pid)
            case K.Ref(name):
                if name in self.locals:
                    return self.locals[name]
                p = self.param_by_name.get(name)
                if p is None:
                    raise ExecError("unknown-identifier", f"unknown identifier {name}")
                if p.is_tensor:
                    return VPtr(name, 0)
                if p.kind == "sint":
                    return VInt(self.scalars[name])
                return VReal(self.domain.elem(self.param_pos[name], name, 0))
            case K.Arange(lo, _hi):
                return VVecInt([lo + k for k in range(self.mod.live)])
            case K.Neg(x):
                v = self.eval(x)
                if isinstance(v, VInt):
                    return VInt(-v.v)
                if isinstance(v, VVecInt):
                    return VVecInt([-x for x in v.items])
                v = self._as_real(v)
                if isinstance(v, VReal):
                    return VReal(self.domain.neg(v.v))
                return VVecReal([self.domain.neg(x) for x in v.items])
            case K.Bin(op, le, re_):
                return self.binop(op, self.eval(le), self.eval(re_))
            case K.MathFn(name, x):
                v = self._as_real(self.eval(x))
                if isinstance(v, VReal):
                    return VReal(self.domain.fn(name, v.v))
                return VVecReal([self.domain.fn(name, x) for x in v.items])
            case K.Load(a):
                return self.load(self.eval(a))
            case K.Reduce(kind, x):
                v = self._as_real(self.eval(x))
                if not isinstance(v, VVecReal):
                    raise ExecError("type", f"{kind}() needs a block vector")
                f = self.domain.reduce_sum if kind == "sum" else self.domain.reduce_max
                return VReal(f(v.items))
            case K.Cmp(rel, le, re_):
                l, r = self.eval(le), self.eval(re_)
                lanes = self._lanes(l, r)
                if lanes is None:
                    lv, rv = self._as_real(l), self._as_real(r)
                    return VCond(self.domain.cmp(rel, lv.v, rv.v))
                ls = self._vec_items(self._as_real(l), lanes)
                rs = self._vec_items(self._as_real(r), lanes)
                return VCond([self.domain.cmp(rel, a, b) for a, b in zip(ls, rs)])
            case K.Where(c, a, b):
                cv = self.eval(c)
                if not isinstance(cv, VCond):
                    raise ExecError("type", "where() condition must be a comparison")
                av, bv = self._as_real(self.eval(a)), self._as_real(self.eval(b))
                lanes = self._lanes(av, bv, cv)
                if lanes is None:
                    return VReal(self.domain.where(cv.items, av.v, bv.v))
                cs = cv.items if isinstance(cv.items, list) else [cv.items] * lanes
                return VVecReal([
                    self.domain.where(ci, ai, bi)
                    for ci, ai, bi in zip(cs, self._vec_items(av, lanes), self._vec_items(bv, lanes))
                ])
        raise AssertionError(e)

    def _vec_items(self, v: Value, lanes: int) -> list:
        if isinstance(v, (VVecReal, VVecInt)):
            return v.items
        if isinstance(v, VReal):
            return [v.v] * lanes
        if isinstance(v, VInt):
            return [v.v] * lanes
        raise ExecError("type", "expected value or vector")

    def binop(self, op: str, l: Value, r: Value) -> Value:
        # pointer arithmetic
        if isinstance(l, (VPtr, VVecPtr)) or isinstance(r, (VPtr, VVecPtr)):
            return self._ptr_op(op, l, r)
        int_like = isinstance(l, (VInt, VVecInt)) and isinstance(r, (VInt, VVecInt))
        if int_like:
            return self._int_op(op, l, r)
        lv, rv = self._as_real(l), self._as_real(r)
        f = {"+": self.domain.add, "-": self.domain.sub,
             "*": self.domain.mul, "/": self.domain.div}[op]
        lanes = self._lanes(lv, rv)
        if lanes is None:
            return VReal(f(lv.v, rv.v))
        return VVecReal([f(a, b) for a, b in zip(self._vec_items(lv, lanes), self._vec_items(rv, lanes))])

    def _int_op(self, op: str, l: Value, r: Value) -> Value:
        def apply(a, b):
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return _idx_mul(a, b)
            return _idx_div(a, b)

        lanes = self._lanes(l, r)
        if lanes is None:
            return VInt(apply(l.v, r.v))
        ls = l.items if isinstance(l, VVecInt) else [l.v] * lanes
        rs = r.items if isinstance(r, VVecInt) else [r.v] * lanes
        return VVecInt([apply(a, b) for a, b in zip(ls, rs)])

    def _ptr_op(self, op: str, l: Value, r: Value) -> Value:
        if op not in ("+", "-"):
            raise ExecError("type", f"pointer arithmetic only supports +/-, got {op}")
        if isinstance(r, (VPtr, VVecPtr)):
            if isinstance(l, (VPtr, VVecPtr)) or op == "-":
                raise ExecError("type", "invalid pointer arithmetic")
            l, r = r, l  # int + ptr
        sign = 1 if op == "+" else -1
        if isinstance(l, VPtr):
            if isinstance(r, VInt):
                return VPtr(l.tensor, l.off + sign * r.v)
            if isinstance(r, VVecInt):
                return VVecPtr(l.tensor, [l.off + sign * x for x in r.items])
        if isinstance(l, VVecPtr):
            if isinstance(r, VInt):
                return VVecPtr(l.tensor, [o + sign * r.v for o in l.offs])
            if isinstance(r, VVecInt):
                if len(r.items) != len(l.offs):
                    raise ExecError("type", "vector length mismatch")
                return VVecPtr(l.tensor, [o + sign * x for o, x in zip(l.offs, r.items)])
        raise ExecError("type", "invalid pointer arithmetic")

    # --- memory ---

    def _check_bounds(self, tensor: str, off: Index) -> None:
        if isinstance(off, LinIdx):
            return  # affine mode: ranges are handled by the verifier
        size = (self.buffers.sizes if self.buffers else {}).get(tensor)
        if size is not None and not 0 <= off < size:
            raise ExecError("out-of-bounds", f"{tensor}[{off}] out of bounds (size {size})")

    def load(self, addr: Value):
        if isinstance(addr, VPtr):
            return VReal(self._load_one(addr.tensor, addr.off))
        if isinstance(addr, VVecPtr):
            return VVecReal([self._load_one(addr.tensor, o) for o in addr.offs])
        raise ExecError("type", "load() needs a pointer")

    def _load_one(self, tensor: str, off: Index):
        self._check_bounds(tensor, off)
        p = self.param_by_name[tensor]
        if self.buffers is None:
            if p.kind != "tin":
                raise ExecError("affine-load", "affine mode cannot read output buffers")
            return self.domain.elem(self.param_pos[tensor], tensor, off)
        cell = self.buffers.cells[tensor][off]
        if cell is None:
            raise ExecError("read-unwritten", f"read of never-written element {tensor}[{off}]")
        return cell

    def store(self, addr: Value, value: Value) -> None:
        value = self._as_real(value)
        if isinstance(addr, VPtr):
            if isinstance(value, VVecReal):
                raise ExecError("type", "cannot store a vector through a scalar pointer")
            self._store_one(addr.tensor, addr.off, value.v)
            return
        if isinstance(addr, VVecPtr):
            vals = self._vec_items(value, len(addr.offs))
            for off, v in zip(addr.offs, vals):
                self._store_one(addr.tensor, off, v)
            return
        raise ExecError("type", "store() needs a pointer")

    def _store_one(self, tensor: str, off: Index, v) -> None:
        p = self.param_by_name.get(tensor)
        if p is None or p.kind != "tout":
            raise ExecError("store-to-input", f"store to non-output tensor {tensor}")
        self._check_bounds(tensor, off)
        if self.collect_effects:
            self.effects.append((tensor, off, v))
            return
        key = (tensor, off)
        prev = self.buffers.written_by.get(key)
        if prev is not None:
            raise ExecError(
                "double-write",
                f"{tensor}[{off}] written by thread {prev} and thread {self.pid}",
            )
        pid_val = self.pid if isinstance(self.pid, int) else -1
        self.buffers.written_by[key] = pid_val
        self.buffers.cells[tensor][off] = v

    def run(self) -> None:
        for stmt in self.mod.body:
            if isinstance(stmt, K.Assign):
                if stmt.name in self.locals:
                    raise ExecError("reassign", f"{stmt.name} assigned twice")
                self.locals[stmt.name] = self.eval(stmt.expr)
            else:
                self.store(self.eval(stmt.addr), self.eval(stmt.value))


def run_thread(mod: K.KernelModule, domain, buffers: Buffers | None,
               scalars: dict[str, int], pid: Index, collect_effects: bool = False) -> _Thread:
    th = _Thread(mod, domain, buffers, scalars, pid, collect_effects)
    th.run()
    return th


def run_grid(mod: K.KernelModule, domain, sizes: dict[str, int], scalars: dict[str, int],
             grid: int, order: list[int] | None = None) -> Buffers:
    """Run all threads of the sequentialized host loop (optionally permuted)."""
    buffers = Buffers.fresh(mod, sizes, domain)
    for pid in order if order is not None else range(grid):
        run_thread(mod, domain, buffers, scalars, pid)
    return buffers
