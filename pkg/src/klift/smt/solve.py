"""Fallback SMT solver for the fragment this toolkit emits.

Sound, incomplete, stdlib-only.  The pipeline's scripts fall into three
families, and each gets a genuine decision procedure:

* quantifier-free disequalities over reals with uninterpreted math functions
  (candidate checks): unsat via exact rational-function normalization with
  axiom-backed sign analysis, sat via deterministic model sampling;
* ground real-term equalities with pid-affine array selects (thread-effect
  equivalence checks): same normalizer;
* guarded integer quantifiers around an uninterpreted pointwise predicate
  (the Hoare VCs after pattern abstraction): premise instantiation plus
  Fourier-Motzkin over the integers, and small-model search for sat.

Everything else honestly returns unknown.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import sexp

_REL_OPS = (">", ">=", "<", "<=", "=")
_FN_IMPLS = {
    "exp": math.exp,
    "log": lambda x: math.log(x) if x > 0 else (_ for _ in ()).throw(_DomainError()),
    "sin": math.sin,
    "cos": math.cos,
    "sqrt": lambda x: math.sqrt(x) if x >= 0 else (_ for _ in ()).throw(_DomainError()),
    "tanh": math.tanh,
    "abs": abs,
}


class _DomainError(ArithmeticError):
    pass


class SolveFailure(Exception):
    pass


def _num(tok) -> Fraction | None:
    if not isinstance(tok, str):
        return None
    try:
        return Fraction(tok)
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# polynomial fractions over interned atoms


Poly = dict  # monomial tuple[(atom_id, power), ...] -> Fraction


def _p_const(q: Fraction) -> Poly:
    return {(): q} if q != 0 else {}


def _p_atom(aid: int) -> Poly:
    return {((aid, 1),): Fraction(1)}


def _p_add(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for m, c in b.items():
        nc = out.get(m, Fraction(0)) + c
        if nc:
            out[m] = nc
        else:
            out.pop(m, None)
    return out


def _p_neg(a: Poly) -> Poly:
    return {m: -c for m, c in a.items()}


def _p_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            powers: dict[int, int] = {}
            for aid, p in m1 + m2:
                powers[aid] = powers.get(aid, 0) + p
            mono = tuple(sorted(powers.items()))
            nc = out.get(mono, Fraction(0)) + c1 * c2
            if nc:
                out[mono] = nc
            else:
                out.pop(mono, None)
    return out


def _p_key(a: Poly):
    return tuple(sorted(a.items()))


_P_ONE = {(): Fraction(1)}


@dataclass(frozen=True)
class NF:
    num: tuple
    den: tuple

    @classmethod
    def make(cls, num: Poly, den: Poly) -> "NF":
        if not num:
            den = _P_ONE
        return cls(_p_key(num), _p_key(den))

    @property
    def num_poly(self) -> Poly:
        return dict(self.num)

    @property
    def den_poly(self) -> Poly:
        return dict(self.den)

    def is_const(self) -> Fraction | None:
        num, den = self.num_poly, self.den_poly
        if all(m == () for m in num) and all(m == () for m in den):
            n = num.get((), Fraction(0))
            d = den.get((), Fraction(1))
            return n / d
        return None


# ---------------------------------------------------------------------------
# the solver


@dataclass
class Model:
    ints: dict = field(default_factory=dict)
    reals: dict = field(default_factory=dict)
    cells: dict = field(default_factory=dict)  # (array, int index) -> Fraction

    def render(self) -> str:
        lines = ["("]
        for name, v in sorted(self.ints.items()):
            lines.append(f"  (define-fun {name} () Int {_render_int(v)})")
        for name, v in sorted(self.reals.items()):
            lines.append(f"  (define-fun {name} () Real {_render_rat(v)})")
        for (arr, idx), v in sorted(self.cells.items()):
            lines.append(f"  (define-fun |{arr}[{idx}]| () Real {_render_rat(v)})")
        lines.append(")")
        return "\n".join(lines)


def _render_int(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


def _render_rat(q: Fraction) -> str:
    if q < 0:
        return f"(- {_render_rat(-q)})"
    if q.denominator == 1:
        return str(q.numerator)
    return f"(/ {q.numerator} {q.denominator})"


class Solver:
    def __init__(self, dnf_budget: int = 8192, sat_samples: int = 120):
        self.int_consts: list[str] = []
        self.real_consts: list[str] = []
        self.arrays: list[str] = []
        self.pred_funs: list[str] = []  # (Int) -> Bool uninterpreted predicates
        self.real_funs: list[str] = []  # (Real) -> Real uninterpreted functions
        self.assertions: list = []
        self.dnf_budget = dnf_budget
        self.sat_samples = sat_samples
        # normalization state
        self._atoms: dict = {}
        self._atom_info: list = []
        self._pos_atoms: set[int] = set()
        self._nonneg_atoms: set[int] = set()
        self._flags: set[str] = set()
        self.last_model: Model | None = None

    # ----- command processing -----

    def execute(self, text: str) -> list[str]:
        out: list[str] = []
        for cmd in sexp.parse_all(text):
            if not isinstance(cmd, list) or not cmd:
                continue
            head = cmd[0]
            if head in ("set-logic", "set-option", "set-info", "echo"):
                continue
            if head == "declare-const":
                self._declare(cmd[1], [], cmd[2])
            elif head == "declare-fun":
                self._declare(cmd[1], cmd[2], cmd[3])
            elif head == "assert":
                self.assertions.append(cmd[1])
            elif head == "check-sat":
                out.append(self.check())
            elif head == "get-model":
                if self.last_model is not None:
                    out.append(self.last_model.render())
                else:
                    out.append('(error "model is not available")')
            elif head == "exit":
                break
            else:
                raise SolveFailure(f"unsupported command {head}")
        return out

    def _declare(self, name: str, args, ret) -> None:
        if not args:
            if ret == "Int":
                self.int_consts.append(name)
            elif ret == "Real":
                self.real_consts.append(name)
            elif isinstance(ret, list) and ret[:1] == ["Array"]:
                self.arrays.append(name)
            elif ret == "Bool":
                self.pred_funs.append(name)  # nullary predicate
            else:
                raise SolveFailure(f"unsupported sort {ret}")
            return
        if ret == "Bool":
            self.pred_funs.append(name)
        elif ret == "Real":
            self.real_funs.append(name)
        else:
            raise SolveFailure(f"unsupported function sort {name}: {args} -> {ret}")

    # ----- top level decision -----

    def check(self) -> str:
        self.last_model = None
        try:
            ground, foralls, opaque = self._classify()
            self._collect_sign_facts(ground)
            # staged premise instantiation: a refutation from fewer instances
            # stays a refutation, so try small term sets first
            for stage in self._instantiation_stages(foralls, ground):
                if self._refute(ground + stage) == "unsat":
                    return "unsat"
            model = self._search_model(ground, foralls, opaque)
            if model is not None:
                self.last_model = model
                return "sat"
            return "unknown"
        except SolveFailure:
            return "unknown"
        except RecursionError:
            return "unknown"

    def _instantiation_stages(self, foralls, ground):
        if not foralls:
            return [[]]
        neg_args = self._pred_args(ground, negated_only=True)
        all_args = self._pred_args(ground, negated_only=False)
        stages = []
        seen_sets = []
        for terms in (neg_args, all_args, all_args + [c for c in self.int_consts if c not in all_args]):
            if not terms or terms in seen_sets:
                continue
            seen_sets.append(terms)
            stages.append([
                ["=>", _subst(guard, var, t), _subst(body, var, t)]
                for var, guard, body in foralls
                for t in terms
            ])
        return stages or [[]]

    def _pred_args(self, formulas, negated_only: bool) -> list:
        found: list = []

        def walk(e, under_not: bool):
            if not isinstance(e, list) or not e:
                return
            if e[0] == "not":
                walk(e[1], True)
                return
            if e[0] in self.pred_funs and len(e) == 2:
                if (under_not or not negated_only) and e[1] not in found:
                    found.append(e[1])
                return
            for x in e[1:]:
                walk(x, under_not if e[0] in ("and", "or") else False)

        for f in formulas:
            walk(f, False)
        return found

    # ----- assertion classification -----

    def _classify(self):
        ground: list = []
        foralls: list = []
        opaque: list = []
        for a in self.assertions:
            if isinstance(a, list) and a and a[0] == "forall":
                if self._recognize_axiom(a):
                    continue
                binds = a[1]
                if (
                    len(binds) == 1
                    and binds[0][1] == "Int"
                    and isinstance(a[2], list)
                    and a[2][:1] == ["=>"]
                ):
                    foralls.append((binds[0][0], a[2][1], a[2][2]))
                else:
                    opaque.append(a)
            else:
                ground.append(a)
        return ground, foralls, opaque

    def _recognize_axiom(self, a) -> bool:
        """Known function axioms become semantic flags for the normalizer."""
        binds, body = a[1], a[2]
        names = [b[0] for b in binds]
        if len(names) == 1:
            v = names[0]
            if body == [">", ["exp", v], "0"]:
                self._flags.add("exp_pos")
                return True
            if body == ["=>", [">=", v, "0"], [">=", ["sqrt", v], "0"]]:
                self._flags.add("sqrt_nonneg")
                return True
            if body == ["and", ["<", ["tanh", v], "1"], [">", ["tanh", v], ["-", "1"]]]:
                self._flags.add("tanh_range")
                return True
            if body == [">=", ["abs", v], "0"]:
                self._flags.add("abs_nonneg")
                return True
            if body == ["=", ["log", ["exp", v]], v]:
                self._flags.add("log_exp_inv")
                return True
            if body == ["=>", [">", v, "0"], ["=", ["exp", ["log", v]], v]]:
                self._flags.add("exp_log_inv")
                return True
        if len(names) == 2:
            x, y = names
            if body == ["=>", ["<", x, y], ["<", ["exp", x], ["exp", y]]]:
                self._flags.add("exp_mono")
                return True
        return False

    def _collect_sign_facts(self, ground) -> None:
        for a in ground:
            if not (isinstance(a, list) and len(a) == 3 and a[0] in (">", ">=")):
                continue
            bound = _num(a[2]) if isinstance(a[2], str) else None
            if bound is None:
                continue
            try:
                nf = self._rnorm(a[1], {})
            except SolveFailure:
                continue
            aid = self._single_atom(nf)
            if aid is None:
                continue
            if a[0] == ">" and bound >= 0:
                self._pos_atoms.add(aid)
            elif a[0] == ">=" and bound > 0:
                self._pos_atoms.add(aid)
            elif a[0] == ">=" and bound == 0:
                self._nonneg_atoms.add(aid)

    @staticmethod
    def _single_atom(nf: NF) -> int | None:
        num, den = nf.num_poly, nf.den_poly
        if den != _P_ONE or len(num) != 1:
            return None
        (mono, coeff), = num.items()
        if coeff > 0 and len(mono) == 1 and mono[0][1] == 1:
            return mono[0][0]
        return None

    # ----- refutation -----

    def _refute(self, formulas) -> str:
        goal = ["and"] + formulas if len(formulas) != 1 else formulas[0]
        if not formulas:
            return "unknown"
        nnf = _nnf(goal, False)
        try:
            conjuncts = _dnf(nnf, self.dnf_budget)
        except SolveFailure:
            return "unknown"
        for conj in conjuncts:
            if not self._refute_conjunct(conj):
                return "unknown"
        return "unsat"

    def _refute_conjunct(self, literals: list) -> bool:
        ctx = _LinCtx(self)
        lin: list[dict] = []  # linear forms, meaning form <= 0
        p_pos: list[tuple[str, dict]] = []
        p_neg: list[tuple[str, dict]] = []
        bool_pos: set[str] = set()
        bool_neg: set[str] = set()
        for lit in literals:
            neg = isinstance(lit, list) and lit[:1] == ["not"]
            atom = lit[1] if neg else lit
            if atom == "true":
                if neg:
                    return True
                continue
            if atom == "false":
                if not neg:
                    return True
                continue
            if isinstance(atom, list) and atom and atom[0] in self.pred_funs:
                try:
                    form = ctx.lin(atom[1])
                except SolveFailure:
                    return False
                (p_neg if neg else p_pos).append((atom[0], form))
                continue
            if isinstance(atom, list) and len(atom) == 3 and atom[0] in _REL_OPS:
                res = self._handle_relation(atom, neg, ctx, lin)
                if res == "refuted":
                    return True
                if res == "unknown-literal":
                    return False
                continue
            if isinstance(atom, str):
                (bool_neg if neg else bool_pos).add(atom)
                continue
            return False  # unhandled literal shape
        if bool_pos & bool_neg:
            return True
        lin = lin + ctx.aux
        # close via pure linear arithmetic
        if _lia_infeasible(lin):
            return True
        # close via predicate congruence: a model needs all conflicting
        # applications to differ, so add every pairwise disequality
        diseqs = []
        for name_p, tp in p_pos:
            for name_n, tn in p_neg:
                if name_p == name_n:
                    diseqs.append(_lin_sub(tp, tn))
        if diseqs and self._diseq_infeasible(lin, diseqs):
            return True
        return False

    def _handle_relation(self, atom, neg: bool, ctx: "_LinCtx", lin: list) -> str:
        op = atom[0]
        if neg:
            op = {">": "<=", ">=": "<", "<": ">=", "<=": ">", "=": "!="}[op]
        try:
            if self._is_int_expr(atom[1]) and self._is_int_expr(atom[2]):
                diff = _lin_sub(ctx.lin(atom[1]), ctx.lin(atom[2]))  # l - r
                if op == ">":
                    lin.append(_lin_add_const(_p_negate_lin(diff), 1))  # r-l+1 <= 0
                elif op == ">=":
                    lin.append(_p_negate_lin(diff))
                elif op == "<":
                    lin.append(_lin_add_const(diff, 1))
                elif op == "<=":
                    lin.append(diff)
                elif op == "=":
                    lin.append(diff)
                    lin.append(_p_negate_lin(diff))
                else:  # !=
                    if _lin_is_zero(diff):
                        return "refuted"
                    if not self._diseq_infeasible([], [diff], trivial_ok=True):
                        # keep as a disequality via a case split
                        lin.append({"!=": diff})  # handled in _lia paths
                return "ok"
        except SolveFailure:
            pass
        # real relation
        return self._handle_real_relation(atom, op)

    def _handle_real_relation(self, atom, op: str) -> str:
        try:
            l = self._rnorm(atom[1], {})
            r = self._rnorm(atom[2], {})
        except SolveFailure:
            return "unknown-literal"
        if op in ("=", "!="):
            equal = self._nf_equal(l, r)
            if op == "=":
                if equal:
                    return "ok"  # literal true, no constraint
                if self._nf_provably_distinct(l, r):
                    return "refuted"
                return "unknown-literal"
            if equal:
                return "refuted"
            if self._nf_provably_distinct(l, r):
                return "ok"
            return "unknown-literal"
        sign = self._nf_sign(self._nf_sub(l, r))  # sign of l - r
        if op == ">":
            if sign == "+":
                return "ok"
            if sign in ("-", "0-", "0"):
                return "refuted"
        elif op == ">=":
            if sign in ("+", "0+", "0"):
                return "ok"
            if sign == "-":
                return "refuted"
        elif op == "<":
            if sign == "-":
                return "ok"
            if sign in ("+", "0+", "0"):
                return "refuted"
        elif op == "<=":
            if sign in ("-", "0-", "0"):
                return "ok"
            if sign == "+":
                return "refuted"
        return "unknown-literal"

    def _diseq_infeasible(self, lin: list, diseqs: list, trivial_ok: bool = False) -> bool:
        """lin ∧ all(d != 0) infeasible over the integers?"""
        if len(diseqs) > 12:
            return False
        base = [c for c in lin if "!=" not in c]
        extra_diseqs = [c["!="] for c in lin if "!=" in c] + diseqs

        def split(i: int, acc: list) -> bool:
            if i == len(extra_diseqs):
                return _lia_infeasible(acc)
            d = extra_diseqs[i]
            lo = _lin_add_const(d, 1)  # d + 1 <= 0  (d <= -1)
            hi = _lin_add_const(_p_negate_lin(d), 1)  # -d + 1 <= 0 (d >= 1)
            return split(i + 1, acc + [lo]) and split(i + 1, acc + [hi])

        return split(0, base)

    def _is_int_expr(self, e) -> bool:
        if isinstance(e, str):
            if e in self.int_consts:
                return True
            q = _num(e)
            return q is not None and q.denominator == 1
        if isinstance(e, list) and e:
            if e[0] in ("+", "-", "*", "div", "mod"):
                return all(self._is_int_expr(x) for x in e[1:])
        return False

    # ----- real-term normalization -----

    def _atom_id(self, kind: str, payload) -> int:
        key = (kind, payload)
        hit = self._atoms.get(key)
        if hit is not None:
            return hit
        aid = len(self._atom_info)
        self._atoms[key] = aid
        self._atom_info.append((kind, payload))
        return aid

    def _rnorm(self, e, env: dict) -> NF:
        if isinstance(e, str):
            if e in env:
                return env[e]
            q = _num(e)
            if q is not None:
                return NF.make(_p_const(q), _P_ONE)
            if e in self.real_consts:
                return NF.make(_p_atom(self._atom_id("sym", e)), _P_ONE)
            raise SolveFailure(f"cannot normalize symbol {e}")
        if not isinstance(e, list) or not e:
            raise SolveFailure("bad term")
        head = e[0]
        if head == "+":
            out = self._rnorm(e[1], env)
            for x in e[2:]:
                out = self._nf_add(out, self._rnorm(x, env))
            return out
        if head == "-":
            if len(e) == 2:
                return self._nf_neg(self._rnorm(e[1], env))
            out = self._rnorm(e[1], env)
            for x in e[2:]:
                out = self._nf_sub(out, self._rnorm(x, env))
            return out
        if head == "*":
            out = self._rnorm(e[1], env)
            for x in e[2:]:
                out = self._nf_mul(out, self._rnorm(x, env))
            return out
        if head == "/":
            out = self._rnorm(e[1], env)
            for x in e[2:]:
                out = self._nf_div(out, self._rnorm(x, env))
            return out
        if head == "select":
            arr = e[1]
            reduced = self._select_reduce(e[1], e[2], env)
            if reduced is not None:
                return reduced
            idx = _LinCtx(self).lin(e[2])
            return NF.make(_p_atom(self._atom_id("select", (_lin_key(idx),
                                                            arr if isinstance(arr, str) else sexp.render(arr)))), _P_ONE)
        if head in _FN_IMPLS and len(e) == 2:
            arg = self._rnorm(e[1], env)
            if head == "log" and "log_exp_inv" in self._flags:
                inner = self._fn_arg_of(arg, "exp")
                if inner is not None:
                    return inner
            if head == "exp" and "exp_log_inv" in self._flags:
                inner = self._fn_arg_of(arg, "log")
                if inner is not None and self._nf_sign(inner) == "+":
                    return inner
            return NF.make(_p_atom(self._atom_id("fn", (head, arg))), _P_ONE)
        if head == "ite":
            cond = self._cond_key(e[1], env)
            if cond is True:
                return self._rnorm(e[2], env)
            if cond is False:
                return self._rnorm(e[3], env)
            a = self._rnorm(e[2], env)
            b = self._rnorm(e[3], env)
            if a == b:
                return a
            return NF.make(_p_atom(self._atom_id("ite", (cond, a, b))), _P_ONE)
        if head in self.real_funs and len(e) == 2:
            return NF.make(_p_atom(self._atom_id("fn", (head, self._rnorm(e[1], env)))), _P_ONE)
        raise SolveFailure(f"cannot normalize {sexp.render(e)}")

    def _fn_arg_of(self, nf: NF, fname: str) -> NF | None:
        aid = self._single_atom(nf)
        if aid is None:
            return None
        kind, payload = self._atom_info[aid]
        if kind == "fn" and payload[0] == fname:
            return payload[1]
        return None

    def _select_reduce(self, arr, idx, env) -> NF | None:
        """(select (store A i v) j) with decidable i vs j."""
        if not (isinstance(arr, list) and arr[:1] == ["store"]):
            return None
        _, inner, i, v = arr
        ctx = _LinCtx(self)
        di = _lin_sub(ctx.lin(i), ctx.lin(idx))
        if _lin_is_zero(di):
            return self._rnorm(v, env)
        if _lin_is_nonzero_const(di):
            return self._select_reduce(inner, idx, env) or self._rnorm(["select", inner, idx], env)
        raise SolveFailure("undecidable store/select aliasing")

    def _cond_key(self, c, env):
        """Decide a condition if possible, else produce a canonical key."""
        if c == "true":
            return True
        if c == "false":
            return False
        if isinstance(c, list) and len(c) == 3 and c[0] in _REL_OPS:
            try:
                diff = self._nf_sub(self._rnorm(c[1], env), self._rnorm(c[2], env))
            except SolveFailure:
                return ("raw", sexp.render(c))
            const = diff.is_const()
            if const is not None:
                return {
                    ">": const > 0, ">=": const >= 0, "<": const < 0,
                    "<=": const <= 0, "=": const == 0,
                }[c[0]]
            return (c[0], diff)
        if isinstance(c, list) and c[:1] == ["not"]:
            inner = self._cond_key(c[1], env)
            if isinstance(inner, bool):
                return not inner
            return ("not", inner)
        if isinstance(c, list) and c and c[0] in ("and", "or"):
            parts = [self._cond_key(x, env) for x in c[1:]]
            if all(isinstance(p, bool) for p in parts):
                return all(parts) if c[0] == "and" else any(parts)
            return (c[0], tuple(parts))
        return ("raw", sexp.render(c))

    # ----- NF arithmetic -----

    def _nf_add(self, a: NF, b: NF) -> NF:
        if a.den == b.den:
            return NF.make(_p_add(a.num_poly, b.num_poly), a.den_poly)
        num = _p_add(_p_mul(a.num_poly, b.den_poly), _p_mul(b.num_poly, a.den_poly))
        return NF.make(num, _p_mul(a.den_poly, b.den_poly))

    def _nf_neg(self, a: NF) -> NF:
        return NF.make(_p_neg(a.num_poly), a.den_poly)

    def _nf_sub(self, a: NF, b: NF) -> NF:
        return self._nf_add(a, self._nf_neg(b))

    def _nf_mul(self, a: NF, b: NF) -> NF:
        return NF.make(_p_mul(a.num_poly, b.num_poly), _p_mul(a.den_poly, b.den_poly))

    def _nf_div(self, a: NF, b: NF) -> NF:
        bn = b.num_poly
        if self._poly_sign(bn) in ("+", "-"):
            return NF.make(_p_mul(a.num_poly, b.den_poly), _p_mul(a.den_poly, bn))
        const = b.is_const()
        if const is not None and const != 0:
            return NF.make(_p_mul(a.num_poly, _p_const(Fraction(1) / const)), a.den_poly)
        # denominator not provably nonzero: keep the division opaque
        return NF.make(_p_atom(self._atom_id("div", (a, b))), _P_ONE)

    def _nf_equal(self, a: NF, b: NF) -> bool:
        if a == b:
            return True
        # cross-multiplication; denominators of field-built NFs are nonzero
        diff = _p_add(_p_mul(a.num_poly, b.den_poly), _p_neg(_p_mul(b.num_poly, a.den_poly)))
        return not diff

    def _nf_provably_distinct(self, a: NF, b: NF) -> bool:
        diff = self._nf_sub(a, b)
        return self._nf_sign(diff) in ("+", "-")

    def _nf_sign(self, a: NF) -> str | None:
        num = self._poly_sign(a.num_poly)
        den = self._poly_sign(a.den_poly)
        if num is None or den is None:
            return None
        if num == "0":
            return "0"
        table = {("+", "+"): "+", ("-", "+"): "-", ("+", "-"): "-", ("-", "-"): "+",
                 ("0+", "+"): "0+", ("0-", "+"): "0-", ("0+", "-"): "0-", ("0-", "-"): "0+"}
        return table.get((num, den))

    def _poly_sign(self, p: Poly) -> str | None:
        if not p:
            return "0"
        pos = all(c > 0 for c in p.values())
        neg = all(c < 0 for c in p.values())
        if not pos and not neg:
            return None
        strict = all(self._mono_sign(m) == "+" for m in p)
        nonneg = all(self._mono_sign(m) in ("+", "0+") for m in p)
        if pos:
            return "+" if strict else ("0+" if nonneg else None)
        return "-" if strict else ("0-" if nonneg else None)

    def _mono_sign(self, mono: tuple) -> str | None:
        sign = "+"
        for aid, power in mono:
            s = self._atom_sign(aid)
            if power % 2 == 0:
                s = "+" if s in ("+", "-") else "0+"
            if s == "+":
                continue
            if s == "0+":
                sign = "0+"
            else:
                return None
        return sign

    def _atom_sign(self, aid: int) -> str | None:
        if aid in self._pos_atoms:
            return "+"
        kind, payload = self._atom_info[aid]
        if kind == "fn":
            fname, arg = payload
            if fname == "exp" and "exp_pos" in self._flags:
                return "+"
            if fname == "sqrt" and "sqrt_nonneg" in self._flags:
                if self._nf_sign(arg) in ("+", "0+", "0"):
                    return "0+"
            if fname == "abs" and "abs_nonneg" in self._flags:
                return "0+"
            return None
        if kind == "ite":
            _, a, b = payload
            sa, sb = self._nf_sign(a), self._nf_sign(b)
            if sa == sb and sa is not None:
                return sa
            if sa in ("+", "0+") and sb in ("+", "0+"):
                return "0+"
            return None
        if kind == "div":
            a, b = payload
            sa = self._nf_sign(a)
            sb = self._nf_sign(self._rnorm_nf_of(b))
            if sa == "+" and sb == "+":
                return "+"
            return None
        if aid in self._nonneg_atoms:
            return "0+"
        return None

    @staticmethod
    def _rnorm_nf_of(nf: NF) -> NF:
        return nf

    # ----- model search -----

    def _search_model(self, ground, foralls, opaque) -> Model | None:
        if opaque:
            return None
        rng = random.Random(1247)
        int_names = list(self.int_consts)
        if len(int_names) > 4:
            return None
        candidate_ints = self._int_candidates(len(int_names), rng)
        for ints in candidate_ints:
            env_i = dict(zip(int_names, ints))
            ext = self._pred_extension(env_i, ground, foralls)
            if ext is None:
                continue
            for trial in range(self.sat_samples):
                model = Model(ints=dict(env_i))
                try:
                    ok = all(
                        self._meval(a, model, ext, env_i, rng, trial) for a in self.assertions
                    )
                except (_DomainError, OverflowError, ZeroDivisionError):
                    continue
                except SolveFailure:
                    break
                if ok:
                    return model
        return None

    def _int_candidates(self, n: int, rng) -> list:
        if n == 0:
            return [()]
        base = list(range(0, 7))
        if n == 1:
            return [(v,) for v in base]
        out = []
        if n == 2:
            for a in base:
                for b in base:
                    out.append((a, b))
            return out
        for _ in range(300):
            out.append(tuple(rng.randrange(0, 7) for _ in range(n)))
        return out

    def _pred_extension(self, env_i, ground, foralls):
        """True-set for the uninterpreted predicates, forced by the premises."""
        ext: dict[str, set[int]] = {p: set() for p in self.pred_funs}
        for var, guard, body in foralls:
            if not (isinstance(body, list) and len(body) == 2 and body[0] in self.pred_funs):
                return None
            lo, hi = self._guard_range(var, guard, env_i)
            if lo is None:
                return None
            if hi - lo > 4096:
                return None
            for v in range(lo, hi):
                arg = self._ieval(_subst(body[1], var, str(v)), env_i)
                if arg is not None:
                    ext[body[0]].add(arg)
        def walk(e):
            if isinstance(e, list) and e:
                if e[0] in self.pred_funs and len(e) == 2:
                    v = self._ieval(e[1], env_i)
                    if v is not None:
                        ext[e[0]].add(v)
                    return
                for x in e[1:]:
                    walk(x)
        for g in ground:
            if isinstance(g, list) and g and g[0] in self.pred_funs:
                walk(g)
            elif isinstance(g, list) and g[:1] == ["and"]:
                for x in g[1:]:
                    if isinstance(x, list) and x and x[0] in self.pred_funs:
                        walk(x)
        return ext

    def _guard_range(self, var, guard, env_i):
        """Evaluate a (and (<= lo v) (< v hi)) style guard to a concrete range."""
        conjs = guard[1:] if isinstance(guard, list) and guard[:1] == ["and"] else [guard]
        lo, hi = None, None
        for c in conjs:
            if not (isinstance(c, list) and len(c) == 3):
                return None, None
            op, a, b = c
            if a == var:
                v = self._ieval(b, env_i)
                if v is None:
                    return None, None
                if op == "<":
                    hi = v if hi is None else min(hi, v)
                elif op == "<=":
                    hi = v + 1 if hi is None else min(hi, v + 1)
                elif op == ">":
                    lo = v + 1 if lo is None else max(lo, v + 1)
                elif op == ">=":
                    lo = v if lo is None else max(lo, v)
                else:
                    return None, None
            elif b == var:
                v = self._ieval(a, env_i)
                if v is None:
                    return None, None
                if op == "<":
                    lo = v + 1 if lo is None else max(lo, v + 1)
                elif op == "<=":
                    lo = v if lo is None else max(lo, v)
                elif op == ">":
                    hi = v if hi is None else min(hi, v)
                elif op == ">=":
                    hi = v + 1 if hi is None else min(hi, v + 1)
                else:
                    return None, None
            else:
                return None, None
        if lo is None or hi is None:
            return None, None
        return lo, max(lo, hi)

    def _ieval(self, e, env_i) -> int | None:
        if isinstance(e, str):
            if e in env_i:
                return env_i[e]
            q = _num(e)
            if q is not None and q.denominator == 1:
                return int(q)
            return None
        if isinstance(e, list) and e:
            args = [self._ieval(x, env_i) for x in e[1:]]
            if any(a is None for a in args):
                return None
            if e[0] == "+":
                return sum(args)
            if e[0] == "-":
                return -args[0] if len(args) == 1 else args[0] - sum(args[1:])
            if e[0] == "*":
                out = 1
                for a in args:
                    out *= a
                return out
            if e[0] == "div" and args[1] != 0:
                return args[0] // args[1]
            if e[0] == "mod" and args[1] != 0:
                return args[0] % args[1]
        return None

    _SAMPLE_SEQ = [Fraction(0), Fraction(1), Fraction(-1), Fraction(1, 2), Fraction(2),
                   Fraction(-2), Fraction(3), Fraction(-1, 2), Fraction(5, 3), Fraction(-3)]

    def _meval(self, e, model: Model, ext, env_i, rng, trial):
        """Evaluate an assertion under a (lazily sampled) candidate model."""

        def sample_real(key_kind, key) -> Fraction:
            store = model.reals if key_kind == "sym" else model.cells
            if key not in store:
                if trial < len(self._SAMPLE_SEQ) and key_kind == "sym":
                    store[key] = self._SAMPLE_SEQ[trial]
                else:
                    store[key] = Fraction(rng.randrange(-400, 401), 100)
            return store[key]

        def ev(x, env):
            if isinstance(x, str):
                if x in env:
                    return env[x]
                if x in env_i:
                    return Fraction(env_i[x])
                q = _num(x)
                if q is not None:
                    return q
                if x == "true":
                    return True
                if x == "false":
                    return False
                if x in self.real_consts:
                    return sample_real("sym", x)
                raise SolveFailure(f"cannot evaluate {x}")
            head = x[0]
            if head == "forall":
                binds = x[1]
                if len(binds) == 1 and binds[0][1] == "Real":
                    return self._axiom_true(x)
                if len(binds) == 2 and all(b[1] == "Real" for b in binds):
                    return self._axiom_true(x)
                if len(binds) == 1 and binds[0][1] == "Int":
                    var = binds[0][0]
                    body = x[2]
                    if isinstance(body, list) and body[:1] == ["=>"]:
                        lo, hi = self._guard_range(var, body[1], env_i)
                        if lo is None:
                            raise SolveFailure("unbounded quantifier")
                        return all(ev(_subst(body[2], var, str(v)), env) for v in range(lo, hi))
                raise SolveFailure("unsupported quantifier")
            if head in ("and", "or", "not", "=>"):
                vals = [ev(a, env) for a in x[1:]]
                if head == "and":
                    return all(vals)
                if head == "or":
                    return any(vals)
                if head == "not":
                    return not vals[0]
                return (not vals[0]) or vals[1]
            if head in self.pred_funs:
                v = ev(x[1], env)
                return int(v) in ext[head]
            if head == "ite":
                return ev(x[2], env) if ev(x[1], env) else ev(x[3], env)
            if head in _REL_OPS:
                l, r = ev(x[1], env), ev(x[2], env)
                return {">": l > r, ">=": l >= r, "<": l < r, "<=": l <= r, "=": l == r}[head]
            if head in _FN_IMPLS:
                v = ev(x[1], env)
                return _to_frac(_FN_IMPLS[head](float(v)))
            if head == "select":
                arr, idx = x[1], ev(x[2], env)
                if isinstance(arr, list):
                    raise SolveFailure("store in model evaluation")
                return sample_real("cell", (arr, int(idx)))
            if head == "+":
                out = ev(x[1], env)
                for a in x[2:]:
                    out = out + ev(a, env)
                return out
            if head == "-":
                if len(x) == 2:
                    return -ev(x[1], env)
                out = ev(x[1], env)
                for a in x[2:]:
                    out = out - ev(a, env)
                return out
            if head == "*":
                out = ev(x[1], env)
                for a in x[2:]:
                    out = out * ev(a, env)
                return out
            if head == "/":
                out = ev(x[1], env)
                for a in x[2:]:
                    d = ev(a, env)
                    if d == 0:
                        raise _DomainError()
                    out = out / d
                return out
            if head == "div":
                return ev(x[1], env) // ev(x[2], env)
            if head == "mod":
                return ev(x[1], env) % ev(x[2], env)
            raise SolveFailure(f"cannot evaluate {sexp.render(x)}")

        return bool(ev(e, {}))

    def _axiom_true(self, a) -> bool:
        """Real-quantified assertions hold under the reference interpretation
        only if we recognize them."""
        probe = Solver()
        if probe._recognize_axiom(a):
            return True
        raise SolveFailure("unrecognized real quantifier")


def _to_frac(x: float) -> Fraction:
    return Fraction(x)


# ---------------------------------------------------------------------------
# linear integer arithmetic


class _LinCtx:
    """Linear-form extraction with floor-division elimination."""

    def __init__(self, solver: Solver):
        self.solver = solver
        self.aux: list[dict] = []
        self._divs: dict = {}

    def lin(self, e) -> dict:
        if isinstance(e, str):
            q = _num(e)
            if q is not None:
                if q.denominator != 1:
                    raise SolveFailure("rational in integer expression")
                return {None: int(q)}
            if e in self.solver.int_consts or e.startswith("div!"):
                return {e: 1, None: 0}
            raise SolveFailure(f"not an integer symbol: {e}")
        if not isinstance(e, list) or not e:
            raise SolveFailure("bad integer term")
        head = e[0]
        if head == "+":
            out = {None: 0}
            for x in e[1:]:
                out = _lin_addf(out, self.lin(x))
            return out
        if head == "-":
            if len(e) == 2:
                return _p_negate_lin(self.lin(e[1]))
            out = self.lin(e[1])
            for x in e[2:]:
                out = _lin_sub(out, self.lin(x))
            return out
        if head == "*":
            forms = [self.lin(x) for x in e[1:]]
            out = {None: 1}
            for f in forms:
                out = _lin_mulf(out, f)
            return out
        if head == "div":
            t = self.lin(e[1])
            c = self.lin(e[2])
            if set(c) != {None} or c[None] <= 0:
                raise SolveFailure("division by non-constant")
            key = (_lin_key(t), c[None])
            if key not in self._divs:
                name = f"div!{len(self._divs)}"
                self._divs[key] = name
                # t - c*q in [0, c-1]
                cq = {name: -c[None], None: 0}
                lower = _p_negate_lin(_lin_addf(t, cq))  # -(t - c q) <= 0
                upper = _lin_add_const(_lin_addf(t, cq), -(c[None] - 1))  # t - cq - (c-1) <= 0
                self.aux.extend([lower, upper])
            return {self._divs[key]: 1, None: 0}
        raise SolveFailure(f"bad integer operator {head}")


def _lin_addf(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0) + v
    return {k: v for k, v in out.items() if v or k is None}


def _lin_sub(a: dict, b: dict) -> dict:
    return _lin_addf(a, _p_negate_lin(b))


def _p_negate_lin(a: dict) -> dict:
    return {k: -v for k, v in a.items()}


def _lin_mulf(a: dict, b: dict) -> dict:
    if set(a) == {None}:
        return {k: a[None] * v for k, v in b.items()}
    if set(b) == {None}:
        return {k: b[None] * v for k, v in a.items()}
    raise SolveFailure("nonlinear integer term")


def _lin_add_const(a: dict, c: int) -> dict:
    out = dict(a)
    out[None] = out.get(None, 0) + c
    return out


def _lin_is_zero(a: dict) -> bool:
    return all(v == 0 for v in a.values())


def _lin_is_nonzero_const(a: dict) -> bool:
    return set(k for k, v in a.items() if v and k is not None) == set() and a.get(None, 0) != 0


def _lin_key(a: dict):
    return tuple(sorted((k or "", v) for k, v in a.items() if v != 0 or k is None))


def _lia_infeasible(constraints: list[dict]) -> bool:
    """Fourier-Motzkin over rationals (sound for integer infeasibility)."""
    cons = [dict(c) for c in constraints if "!=" not in c]
    for _ in range(24):
        for c in cons:
            vars_free = [k for k, v in c.items() if k is not None and v != 0]
            if not vars_free and c.get(None, 0) > 0:
                return True
        all_vars = sorted({k for c in cons for k, v in c.items() if k is not None and v != 0})
        if not all_vars:
            return False
        # prefer a variable with unit coefficients (exact elimination)
        def unit_score(var):
            coeffs = [abs(c.get(var, 0)) for c in cons if c.get(var)]
            return (0 if all(x == 1 for x in coeffs) else 1, len(coeffs))

        var = min(all_vars, key=unit_score)
        lower, upper, rest = [], [], []
        for c in cons:
            coeff = c.get(var, 0)
            if coeff > 0:
                upper.append(c)
            elif coeff < 0:
                lower.append(c)
            else:
                rest.append(c)
        if len(lower) * len(upper) > 400:
            return False
        new = rest
        for lo in lower:
            for up in upper:
                a = -lo[var]
                b = up[var]
                combined = _lin_addf(
                    {k: v * b for k, v in lo.items()}, {k: v * a for k, v in up.items()}
                )
                combined.pop(var, None)
                new.append(combined)
        cons = new
    return False


# ---------------------------------------------------------------------------
# formula manipulation


def _subst(e, var: str, replacement):
    if isinstance(e, str):
        return replacement if e == var else e
    if isinstance(e, list):
        if e and e[0] == "forall":
            if any(b[0] == var for b in e[1]):
                return e
            return ["forall", e[1], _subst(e[2], var, replacement)]
        return [_subst(x, var, replacement) for x in e]
    return e


def _nnf(e, negate: bool):
    if not isinstance(e, list) or not e:
        return ["not", e] if negate else e
    head = e[0]
    if head == "not":
        return _nnf(e[1], not negate)
    if head == "and":
        parts = [_nnf(x, negate) for x in e[1:]]
        return (["or"] if negate else ["and"]) + parts
    if head == "or":
        parts = [_nnf(x, negate) for x in e[1:]]
        return (["and"] if negate else ["or"]) + parts
    if head == "=>":
        if negate:
            return ["and", _nnf(e[1], False), _nnf(e[2], True)]
        return ["or", _nnf(e[1], True), _nnf(e[2], False)]
    if head == "ite" and _is_formula(e[2]):
        c, a, b = e[1], e[2], e[3]
        expanded = ["and", ["or", ["not", c], a], ["or", c, b]]
        return _nnf(expanded, negate)
    return ["not", e] if negate else e


def _is_formula(e) -> bool:
    if isinstance(e, str):
        return e in ("true", "false")
    return isinstance(e, list) and e and e[0] in ("and", "or", "not", "=>", "forall") + _REL_OPS


def _dnf(e, budget: int) -> list[list]:
    """List of conjuncts (each a list of literals)."""
    if isinstance(e, list) and e and e[0] == "and":
        out = [[]]
        for part in e[1:]:
            sub = _dnf(part, budget)
            merged = []
            for conj in out:
                for s in sub:
                    merged.append(conj + s)
                    if len(merged) > budget:
                        raise SolveFailure("dnf budget exceeded")
            out = merged
        return out
    if isinstance(e, list) and e and e[0] == "or":
        out = []
        for part in e[1:]:
            out.extend(_dnf(part, budget))
            if len(out) > budget:
                raise SolveFailure("dnf budget exceeded")
        return out
    return [[e]]
