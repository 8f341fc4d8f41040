"""The .klift kernel DSL: AST, parser, printer, and the host-loop view.

One kernel per file.  The surface syntax is deliberately close to the
block/grid style of GPU kernel languages:

    kernel softmax(y: out real[n / 4, 4], x: in real[n / 4, 4], n: int = 8)
            grid(n / 4) block(4) {
        row_index = program_id
        ...
        store(y + row_index * 4 + arange(0, 4), out)
    }

Tensors are flat 1-D buffers addressed by pointer arithmetic; the logical
(row-major) shape lives only in the parameter annotation.  Scalar ints drive
shapes and grid size, scalar reals are symbolic inputs and may carry an
assumption like ``eps: real (> 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class ProgramId:
    pass


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class RealLit:
    value: Fraction


@dataclass(frozen=True)
class Arange:
    lo: int
    hi: int


@dataclass(frozen=True)
class Load:
    addr: "KExpr"


@dataclass(frozen=True)
class Bin:
    op: str  # + - * /
    l: "KExpr"
    r: "KExpr"


@dataclass(frozen=True)
class Neg:
    e: "KExpr"


@dataclass(frozen=True)
class MathFn:
    name: str
    e: "KExpr"


@dataclass(frozen=True)
class Reduce:
    kind: str  # sum | max
    e: "KExpr"


@dataclass(frozen=True)
class Where:
    cond: "KExpr"
    a: "KExpr"
    b: "KExpr"


@dataclass(frozen=True)
class Cmp:
    rel: str  # gt ge lt le eq
    l: "KExpr"
    r: "KExpr"


KExpr = Ref | ProgramId | IntLit | RealLit | Arange | Load | Bin | Neg | MathFn | Reduce | Where | Cmp


@dataclass(frozen=True)
class Assign:
    name: str
    expr: KExpr
    line: int = 0


@dataclass(frozen=True)
class Store:
    addr: KExpr
    value: KExpr
    line: int = 0


Stmt = Assign | Store


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # tin | tout | sint | sreal
    dims: tuple[KExpr, ...] | None = None
    assume: tuple[str, Fraction] | None = None  # e.g. ("gt", 0)
    default: int | None = None

    @property
    def is_tensor(self) -> bool:
        return self.kind in ("tin", "tout")


@dataclass(frozen=True)
class KernelModule:
    name: str
    params: tuple[Param, ...]
    block_size: int
    live: int  # live lanes per block (== block_size unless annotated)
    grid_expr: KExpr
    body: tuple[Stmt, ...]

    def param(self, name: str) -> Param:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def tensor_params(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.is_tensor)

    @property
    def outputs(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.kind == "tout")

    @property
    def inputs(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.kind == "tin")

    @property
    def scalar_ints(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.kind == "sint")

    @property
    def scalar_reals(self) -> tuple[Param, ...]:
        return tuple(p for p in self.params if p.kind == "sreal")


@dataclass(frozen=True)
class HostLoop:
    """The sequentialized grid launch: for pid in 0..bound-1: body(pid)."""

    pid: str
    bound: KExpr
    kernel: KernelModule


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def render(self, filename: str = "<kernel>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


class KernelError(Exception):
    def __init__(self, diagnostics: list[Diagnostic], filename: str = "<kernel>"):
        self.diagnostics = diagnostics
        self.filename = filename
        super().__init__("\n".join(d.render(filename) for d in diagnostics))


# ---------------------------------------------------------------------------
# tokenizer

_PUNCT = ("(", ")", "[", "]", "{", "}", ",", ":")
_OPS = (">=", "<=", "==", ">", "<", "=", "+", "-", "*", "/")

MATH_FNS = ("exp", "log", "sin", "cos", "sqrt", "tanh", "abs")
# "in"/"out" stay plain identifiers so kernels can use them as locals
_KEYWORDS = {"kernel", "grid", "block", "live", "real", "int", "program_id",
             "store", "load", "arange", "sum", "max", "where"} | set(MATH_FNS)


@dataclass
class _Tok:
    kind: str  # ident kw int float punct op nl eof
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    line, col, i, n = 1, 1, 0, len(src)
    while i < n:
        c = src[i]
        if c == "#":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c == "\n":
            toks.append(_Tok("nl", "\n", line, col))
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        start_col = col
        two = src[i : i + 2]
        if two in _OPS:
            toks.append(_Tok("op", two, line, start_col))
            i += 2
            col += 2
            continue
        if c in _OPS:
            toks.append(_Tok("op", c, line, start_col))
            i += 1
            col += 1
            continue
        if c in _PUNCT:
            toks.append(_Tok("punct", c, line, start_col))
            i += 1
            col += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and src[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (src[j].isdigit() or (src[j] == "." and not seen_dot)):
                if src[j] == ".":
                    seen_dot = True
                j += 1
            text = src[i:j]
            toks.append(_Tok("float" if seen_dot else "int", text, line, start_col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            toks.append(_Tok("kw" if text in _KEYWORDS else "ident", text, line, start_col))
            col += j - i
            i = j
            continue
        raise KernelError([Diagnostic(line, start_col, f"unexpected character {c!r}")])
    toks.append(_Tok("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# parser

_REL_OF = {">": "gt", ">=": "ge", "<": "lt", "<=": "le", "==": "eq"}


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.pos = 0
        self.diags: list[Diagnostic] = []

    def peek(self) -> _Tok:
        return self.toks[self.pos]

    def next(self) -> _Tok:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def skip_nl(self) -> None:
        while self.peek().kind == "nl":
            self.next()

    def fail(self, tok: _Tok, msg: str):
        raise KernelError(self.diags + [Diagnostic(tok.line, tok.col, msg)])

    def expect(self, kind: str, text: str | None = None) -> _Tok:
        t = self.peek()
        if t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text if t.text else t.kind
            self.fail(t, f"expected {want!r}, found {got!r}")
        return self.next()

    # --- top level ---

    def module(self) -> KernelModule:
        self.skip_nl()
        self.expect("kw", "kernel")
        name_tok = self.peek()
        if name_tok.kind not in ("ident", "kw") or name_tok.text == "kernel":
            self.fail(name_tok, "expected a kernel name")
        name = self.next().text
        self.expect("punct", "(")
        params = self.params()
        self.expect("punct", ")")
        self.skip_nl()
        self.expect("kw", "grid")
        self.expect("punct", "(")
        grid_expr = self.expr()
        self.expect("punct", ")")
        self.skip_nl()
        self.expect("kw", "block")
        self.expect("punct", "(")
        bs_tok = self.expect("int")
        block = int(bs_tok.text)
        live = block
        if self.peek().text == ",":
            self.next()
            self.expect("kw", "live")
            self.expect("op", "=")
            live = int(self.expect("int").text)
        self.expect("punct", ")")
        self.skip_nl()
        self.expect("punct", "{")
        body = self.body()
        self.expect("punct", "}")
        self.skip_nl()
        if self.peek().kind != "eof":
            self.fail(self.peek(), "trailing input after kernel body")
        if block < 1:
            self.diags.append(Diagnostic(bs_tok.line, bs_tok.col, "block size must be >= 1"))
        if not 1 <= live <= block:
            self.diags.append(Diagnostic(bs_tok.line, bs_tok.col, "live lanes must be in 1..block"))
        mod = KernelModule(name, tuple(params), block, live, grid_expr, tuple(body))
        self.diags.extend(_check_module(mod))
        if self.diags:
            raise KernelError(self.diags)
        return mod

    def params(self) -> list[Param]:
        out: list[Param] = []
        self.skip_nl()
        if self.peek().text == ")":
            return out
        while True:
            out.append(self.param())
            self.skip_nl()
            if self.peek().text == ",":
                self.next()
                self.skip_nl()
                continue
            return out

    def param(self) -> Param:
        name_tok = self.expect("ident")
        self.expect("punct", ":")
        t = self.peek()
        if t.text in ("in", "out"):
            self.next()
            kind = "tin" if t.text == "in" else "tout"
            self.expect("kw", "real")
            if self.peek().text != "[":
                self.fail(self.peek(), f"missing shape annotation for tensor {name_tok.text!r}")
            self.expect("punct", "[")
            dims = [self.expr()]
            while self.peek().text == ",":
                self.next()
                dims.append(self.expr())
            self.expect("punct", "]")
            return Param(name_tok.text, kind, tuple(dims))
        if t.text == "int":
            self.next()
            default = None
            if self.peek().text == "=":
                self.next()
                default = int(self.expect("int").text)
            return Param(name_tok.text, "sint", default=default)
        if t.text == "real":
            self.next()
            assume = None
            if self.peek().text == "(":
                self.next()
                rel_tok = self.expect("op")
                if rel_tok.text not in _REL_OF:
                    self.fail(rel_tok, f"expected comparison in assumption, found {rel_tok.text!r}")
                num = self.number()
                self.expect("punct", ")")
                assume = (_REL_OF[rel_tok.text], num)
            return Param(name_tok.text, "sreal", assume=assume)
        self.fail(t, f"expected parameter type for {name_tok.text!r} (in/out/int/real)")

    def number(self) -> Fraction:
        sign = 1
        if self.peek().text == "-":
            self.next()
            sign = -1
        t = self.peek()
        if t.kind == "int":
            self.next()
            return Fraction(sign * int(t.text))
        if t.kind == "float":
            self.next()
            return sign * Fraction(t.text)
        self.fail(t, "expected a number")

    def body(self) -> list[Stmt]:
        stmts: list[Stmt] = []
        self.skip_nl()
        while self.peek().text != "}":
            t = self.peek()
            if t.kind == "kw" and t.text == "store":
                self.next()
                self.expect("punct", "(")
                addr = self.expr()
                self.expect("punct", ",")
                value = self.expr()
                self.expect("punct", ")")
                stmts.append(Store(addr, value, t.line))
            elif t.kind == "ident":
                self.next()
                self.expect("op", "=")
                stmts.append(Assign(t.text, self.expr(), t.line))
            else:
                self.fail(t, f"expected a statement, found {t.text!r}")
            if self.peek().kind == "nl":
                self.skip_nl()
            elif self.peek().text != "}":
                self.fail(self.peek(), "expected end of line after statement")
        return stmts

    # --- expressions ---

    def expr(self) -> KExpr:
        l = self.addsub()
        t = self.peek()
        if t.kind == "op" and t.text in _REL_OF:
            self.next()
            r = self.addsub()
            return Cmp(_REL_OF[t.text], l, r)
        return l

    def addsub(self) -> KExpr:
        e = self.muldiv()
        while self.peek().text in ("+", "-"):
            op = self.next().text
            e = Bin(op, e, self.muldiv())
        return e

    def muldiv(self) -> KExpr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.next().text
            e = Bin(op, e, self.unary())
        return e

    def unary(self) -> KExpr:
        if self.peek().text == "-":
            self.next()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> KExpr:
        t = self.next()
        if t.kind == "int":
            return IntLit(int(t.text))
        if t.kind == "float":
            return RealLit(Fraction(t.text))
        if t.kind == "ident":
            return Ref(t.text)
        if t.text == "program_id":
            return ProgramId()
        if t.text == "(":
            e = self.expr()
            self.expect("punct", ")")
            return e
        if t.text == "load":
            self.expect("punct", "(")
            e = Load(self.expr())
            self.expect("punct", ")")
            return e
        if t.text == "arange":
            self.expect("punct", "(")
            lo = self.expr()
            self.expect("punct", ",")
            hi = self.expr()
            self.expect("punct", ")")
            if not isinstance(lo, IntLit) or not isinstance(hi, IntLit):
                self.fail(t, "arange bounds must be integer constants")
            return Arange(lo.value, hi.value)
        if t.text in ("sum", "max"):
            self.expect("punct", "(")
            e = Reduce(t.text, self.expr())
            self.expect("punct", ")")
            return e
        if t.text == "where":
            self.expect("punct", "(")
            c = self.expr()
            self.expect("punct", ",")
            a = self.expr()
            self.expect("punct", ",")
            b = self.expr()
            self.expect("punct", ")")
            return Where(c, a, b)
        if t.text in MATH_FNS:
            self.expect("punct", "(")
            e = MathFn(t.text, self.expr())
            self.expect("punct", ")")
            return e
        self.fail(t, f"unexpected token {t.text!r} in expression")


def parse_kernel(text: str, filename: str = "<kernel>") -> KernelModule:
    try:
        return _Parser(_tokenize(text)).module()
    except KernelError as e:
        raise KernelError(e.diagnostics, filename) from None


# ---------------------------------------------------------------------------
# static checks


def _check_module(mod: KernelModule) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    names = [p.name for p in mod.params]
    if len(set(names)) != len(names):
        diags.append(Diagnostic(1, 1, "duplicate parameter names"))
    if not mod.outputs:
        diags.append(Diagnostic(1, 1, "kernel needs at least one tensor-out parameter"))

    known = set(names)
    assigned: set[str] = set()
    for stmt in mod.body:
        exprs = [stmt.expr] if isinstance(stmt, Assign) else [stmt.addr, stmt.value]
        for e in exprs:
            for ref in _refs(e):
                if ref not in known and ref not in assigned:
                    diags.append(Diagnostic(stmt.line, 1, f"unknown identifier {ref}"))
        for ar in _aranges(exprs):
            if ar.hi - ar.lo != mod.block_size:
                diags.append(
                    Diagnostic(stmt.line, 1,
                               f"arange span {ar.hi - ar.lo} must equal block size {mod.block_size}")
                )
        if isinstance(stmt, Assign):
            if stmt.name in assigned or stmt.name in known:
                diags.append(Diagnostic(stmt.line, 1, f"{stmt.name} assigned more than once"))
            assigned.add(stmt.name)

    # grid and shape expressions may only mention scalar ints
    sints = {p.name for p in mod.scalar_ints}
    for e, what in [(mod.grid_expr, "grid")] + [
        (d, f"shape of {p.name}") for p in mod.tensor_params for d in p.dims or ()
    ]:
        for ref in _refs(e):
            if ref not in sints:
                diags.append(Diagnostic(1, 1, f"{what} may only reference scalar int params, not {ref}"))
        if _uses_runtime(e):
            diags.append(Diagnostic(1, 1, f"{what} must be a compile-time integer expression"))
    return diags


def _refs(e: KExpr) -> list[str]:
    match e:
        case Ref(name):
            return [name]
        case Bin(_, l, r) | Cmp(_, l, r):
            return _refs(l) + _refs(r)
        case Neg(x) | MathFn(_, x) | Reduce(_, x) | Load(x):
            return _refs(x)
        case Where(c, a, b):
            return _refs(c) + _refs(a) + _refs(b)
        case _:
            return []


def _aranges(exprs) -> list[Arange]:
    out: list[Arange] = []

    def walk(e: KExpr) -> None:
        match e:
            case Arange():
                out.append(e)
            case Bin(_, l, r) | Cmp(_, l, r):
                walk(l)
                walk(r)
            case Neg(x) | MathFn(_, x) | Reduce(_, x) | Load(x):
                walk(x)
            case Where(c, a, b):
                walk(c)
                walk(a)
                walk(b)
            case _:
                pass

    for e in exprs:
        walk(e)
    return out


def _uses_runtime(e: KExpr) -> bool:
    match e:
        case ProgramId() | Load() | Arange() | Reduce() | Where() | RealLit() | MathFn():
            return True
        case Bin(_, l, r) | Cmp(_, l, r):
            return _uses_runtime(l) or _uses_runtime(r)
        case Neg(x):
            return _uses_runtime(x)
        case _:
            return False


# ---------------------------------------------------------------------------
# integer expression evaluation (grid, shapes)


def eval_int_expr(e: KExpr, scalars: dict[str, int]) -> int:
    match e:
        case IntLit(v):
            return v
        case Ref(name):
            if name not in scalars:
                raise KeyError(f"unbound scalar {name}")
            return scalars[name]
        case Neg(x):
            return -eval_int_expr(x, scalars)
        case Bin(op, l, r):
            lv, rv = eval_int_expr(l, scalars), eval_int_expr(r, scalars)
            if op == "+":
                return lv + rv
            if op == "-":
                return lv - rv
            if op == "*":
                return lv * rv
            if op == "/":
                if rv == 0 or lv % rv != 0:
                    raise ValueError(f"non-exact integer division {lv}/{rv}")
                return lv // rv
            raise ValueError(op)
        case _:
            raise ValueError(f"not a compile-time integer expression: {e}")


# ---------------------------------------------------------------------------
# pretty printer


def pretty_print(mod: KernelModule) -> str:
    params = ", ".join(_pp_param(p) for p in mod.params)
    block = str(mod.block_size)
    if mod.live != mod.block_size:
        block += f", live = {mod.live}"
    lines = [f"kernel {mod.name}({params}) grid({_pp(mod.grid_expr)}) block({block}) {{"]
    for stmt in mod.body:
        if isinstance(stmt, Assign):
            lines.append(f"    {stmt.name} = {_pp(stmt.expr)}")
        else:
            lines.append(f"    store({_pp(stmt.addr)}, {_pp(stmt.value)})")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _pp_param(p: Param) -> str:
    if p.kind in ("tin", "tout"):
        dims = ", ".join(_pp(d) for d in p.dims)
        return f"{p.name}: {'in' if p.kind == 'tin' else 'out'} real[{dims}]"
    if p.kind == "sint":
        return f"{p.name}: int" + (f" = {p.default}" if p.default is not None else "")
    rel = {"gt": ">", "ge": ">=", "lt": "<", "le": "<=", "eq": "=="}
    if p.assume:
        from .terms import format_fraction

        return f"{p.name}: real ({rel[p.assume[0]]} {format_fraction(p.assume[1])})"
    return f"{p.name}: real"


_PREC = {"cmp": 1, "+": 2, "-": 2, "*": 3, "/": 3, "neg": 4}


def _pp(e: KExpr, parent_prec: int = 0) -> str:
    match e:
        case IntLit(v):
            return str(v)
        case RealLit(v):
            from .terms import format_fraction

            return format_fraction(v)
        case Ref(name):
            return name
        case ProgramId():
            return "program_id"
        case Arange(lo, hi):
            return f"arange({lo}, {hi})"
        case Load(a):
            return f"load({_pp(a)})"
        case MathFn(name, x):
            return f"{name}({_pp(x)})"
        case Reduce(kind, x):
            return f"{kind}({_pp(x)})"
        case Where(c, a, b):
            return f"where({_pp(c)}, {_pp(a)}, {_pp(b)})"
        case Neg(x):
            s = f"-{_pp(x, _PREC['neg'])}"
            return f"({s})" if parent_prec >= _PREC["neg"] else s
        case Cmp(rel, l, r):
            sym = {"gt": ">", "ge": ">=", "lt": "<", "le": "<=", "eq": "=="}[rel]
            s = f"{_pp(l, _PREC['cmp'])} {sym} {_pp(r, _PREC['cmp'])}"
            return f"({s})" if parent_prec > 0 else s
        case Bin(op, l, r):
            prec = _PREC[op]
            s = f"{_pp(l, prec - 1)} {op} {_pp(r, prec)}"
            return f"({s})" if parent_prec >= prec else s
    raise AssertionError(e)


def grid_constant(mod: KernelModule) -> int | None:
    """The grid size when it is a compile-time constant, else None."""
    if _refs(mod.grid_expr):
        return None
    return eval_int_expr(mod.grid_expr, {})


# ---------------------------------------------------------------------------
# host loop


def sequentialize(mod: KernelModule) -> HostLoop:
    """View the grid launch as a single host loop over program_id."""
    return HostLoop(pid="pid", bound=mod.grid_expr, kernel=mod)
