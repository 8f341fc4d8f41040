"""Formula synthesis: top-down divide and conquer with bottom-up fallback.

Top-down walks the structure of the canonicalized output terms, splitting on
the shared root operator (division, sums, products, conditionals, reductions,
matmul-shaped dot products) and recursing on the pieces.  Whatever it cannot
decompose falls to bottom-up enumeration over the grammar, pruned by shape
reachability and leaf-set analysis and deduplicated by numeric signature.

Candidate acceptance is syntactic first (canonical-term equality), then a
random-rational counterexample search, then the SMT backend.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction

from . import formula as F
from . import terms as T
from .axioms import axioms_for
from .executor import LiftSpec
from .smt.backend import Backend
from .smt.script import disequality_script, term_fns


@dataclass
class SynthConfig:
    max_depth: int = 4
    time_budget: float = 60.0
    enable_topdown: bool = True
    enable_value_prune: bool = True
    enable_type_prune: bool = True
    leaf_depth: int = 1  # bottom-up depth inside top-down leaf subproblems
    node_budget: int = 200_000
    always_solver: bool = False  # skip the counterexample fast path
    solver: str | None = None
    solver_timeout: float = 30.0
    artifacts_dir: str | None = None


@dataclass
class SynthStats:
    programs_enumerated: int = 0
    candidates_checked: int = 0
    pruned_type: int = 0
    pruned_value: int = 0
    solver_calls: int = 0


@dataclass
class SynthResult:
    formula: F.Formula | None
    phase: str  # top-down | bottom-up | none
    stats: SynthStats
    elapsed: float
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.formula is not None


@dataclass(frozen=True)
class View:
    """A synthesis target: dims plus canonical per-element terms."""

    dims: tuple
    elems: tuple

    @property
    def base(self) -> tuple:
        return F.squeeze(self.dims)


class SynthTimeout(Exception):
    pass


class Synthesizer:
    def __init__(self, spec: LiftSpec, cfg: SynthConfig | None = None,
                 backend: Backend | None = None):
        self.spec = spec.canonical()
        self.cfg = cfg or SynthConfig()
        self.backend = backend or Backend(
            solver=self.cfg.solver, timeout=self.cfg.solver_timeout,
            artifacts_dir=self.cfg.artifacts_dir,
        )
        self.stats = SynthStats()
        self.dims = {t.name: t.dims for t in self.spec.inputs}
        self.tensors = {t.name: t for t in self.spec.inputs}
        self._term_eval = F.Evaluator(self.dims, F.TermAlgebra(self.tensors))
        self._deadline = None
        if len(self.spec.outputs) != 1:
            raise ValueError("synthesis target must have exactly one output tensor")
        out = self.spec.outputs[0]
        self.out_view = View(out.dims, out.elements)
        self.terminals = self._terminals()
        self._bindings = _sample_bindings(self.spec, count=2)
        self._num_evals = [
            F.Evaluator(self.dims, F.NumberAlgebra(arrays)) for arrays in self._bindings
        ]
        self._axioms = axioms_for(term_fns(*out.elements)).formulas()
        self._probe_leaves = T.leaves(out.elements[0]).elems
        self._poison = itertools.count()

    # ------------------------------------------------------------------
    # entry point

    def synthesize(self) -> SynthResult:
        start = time.monotonic()
        self._deadline = start + self.cfg.time_budget
        failure = "depth exhausted"
        try:
            if self.cfg.enable_topdown:
                got = self.top_down(self.out_view)
                if got is not None:
                    status, _ = self.check_candidate(got)
                    if status == "accepted":
                        return SynthResult(got, "top-down", self.stats,
                                           time.monotonic() - start)
            got = self.bottom_up(self.out_view, self.cfg.max_depth)
            if got is not None:
                return SynthResult(got, "bottom-up", self.stats, time.monotonic() - start)
        except SynthTimeout:
            failure = "timeout"
        return SynthResult(None, "bottom-up", self.stats, time.monotonic() - start,
                           failure=failure)

    def _tick(self) -> None:
        if self._deadline is not None and time.monotonic() > self._deadline:
            raise SynthTimeout()

    # ------------------------------------------------------------------
    # terminals and evaluation plumbing

    def _terminals(self) -> list[F.Formula]:
        out: list[F.Formula] = [F.Input(t.name) for t in self.spec.inputs]
        for t in self.spec.inputs:
            if len(t.dims) == 2:
                out.append(F.Transpose(F.Input(t.name)))
        consts: set[Fraction] = {Fraction(0), Fraction(1)}
        for o in self.spec.outputs:
            for e in o.elements:
                consts |= set(T.leaves(e).consts)
        out.extend(F.Const(q) for q in sorted(consts))
        return out

    def shape(self, f: F.Formula) -> tuple | None:
        return self._term_eval.shape(f)  # memoized

    def eval_into(self, f: F.Formula, target_dims: tuple) -> tuple | None:
        """Canonical terms of ``f`` broadcast into target dims, or None."""
        s = self.shape(f)
        if s is None:
            return None
        if F.squeeze(s) == F.squeeze(target_dims):
            flat = self._term_eval.flat(f)
        elif F.broadcast(s, target_dims) is not None and F.squeeze(
            F.broadcast(s, target_dims)
        ) == F.squeeze(target_dims) and len(s) <= len(target_dims):
            flat = self._term_eval.flat(f, target_dims)
        else:
            return None
        return tuple(T.canon(t) for t in flat)

    def matches(self, f: F.Formula, view: View) -> bool:
        got = self.eval_into(f, view.dims)
        return got is not None and got == view.elems

    # ------------------------------------------------------------------
    # top-down search

    def top_down(self, view: View, depth: int = 0) -> F.Formula | None:
        self._tick()
        if depth > 64:
            return None
        for f in self.terminals:
            if self.matches(f, view):
                return f
        collapsed = self._collapse(view)
        if collapsed is not None:
            got = self.top_down(collapsed, depth + 1)
            if got is not None and self.matches(got, view):
                return got
        kinds = {e.kind for e in view.elems}
        if len(kinds) == 1:
            kind = next(iter(kinds))
            got = self._split_uniform(view, kind, depth)
            if got is not None:
                return got
        if self.cfg.leaf_depth > 0:
            return self.bottom_up(view, self.cfg.leaf_depth, quiet=True)
        return None

    def _collapse(self, view: View) -> View | None:
        if len(set(view.elems)) == 1 and view.dims not in ((), (1,)):
            return View((), (view.elems[0],))
        if len(view.dims) == 2 and view.dims[1] > 1:
            r, c = view.dims
            rows = [view.elems[i * c : (i + 1) * c] for i in range(r)]
            if all(len(set(row)) == 1 for row in rows):
                return View((r, 1), tuple(row[0] for row in rows))
        return None

    def _split_uniform(self, view: View, kind: str, depth: int) -> F.Formula | None:
        if kind == "div":
            num = View(view.dims, tuple(e.args[0] for e in view.elems))
            den = View(view.dims, tuple(e.args[1] for e in view.elems))
            lf = self.top_down(num, depth + 1)
            rf = self.top_down(den, depth + 1) if lf is not None else None
            if lf is not None and rf is not None:
                cand = F.Bin("/", lf, rf)
                if self.matches(cand, view):
                    return cand
            return None
        if kind in ("add", "mul"):
            got = None
            if kind == "add":
                got = self._guess_sum_formula(view, depth)
            if got is not None:
                return got
            op = "+" if kind == "add" else "*"
            left = View(view.dims, tuple(e.args[0] for e in view.elems))
            rest = View(view.dims, tuple(e.args[1] for e in view.elems))
            lf = self.top_down(left, depth + 1)
            rf = self.top_down(rest, depth + 1) if lf is not None else None
            if lf is not None and rf is not None:
                cand = F.Bin(op, lf, rf)
                if self.matches(cand, view):
                    return cand
            return None
        if kind == "neg":
            inner = View(view.dims, tuple(e.args[0] for e in view.elems))
            g = self.top_down(inner, depth + 1)
            if g is not None:
                cand = F.Neg(g)
                if self.matches(cand, view):
                    return cand
            return None
        if kind == "fn":
            names = {e.payload for e in view.elems}
            if len(names) != 1:
                return None
            inner = View(view.dims, tuple(e.args[0] for e in view.elems))
            g = self.top_down(inner, depth + 1)
            if g is not None:
                cand = F.Fn(next(iter(names)), g)
                if self.matches(cand, view):
                    return cand
            return None
        if kind == "ite":
            got = self._guess_max_formula(view, depth)
            if got is not None:
                return got
            return self._ifpos_split(view, depth)
        return None

    # --- reductions, matmul, conditionals ---

    def _reduce_arg_dims(self, view: View, k: int) -> tuple | None:
        base = view.base
        if base == ():
            return (1, k)
        if len(base) == 1:
            return (base[0], k)
        return None

    def _guess_sum_formula(self, view: View, depth: int) -> F.Formula | None:
        shape = guess_sum(view, self.spec.live)
        if shape is None:
            return None
        if shape.kind == "plain":
            g = self.top_down(shape.args[0], depth + 1)
            if g is not None:
                cand = F.Reduce("sum", g)
                if self.matches(cand, view):
                    return cand
            return None
        lview, rview = shape.args
        lf = self.top_down(lview, depth + 1)
        rf = self.top_down(rview, depth + 1) if lf is not None else None
        if lf is not None and rf is not None:
            cand = F.MatMul(lf, rf)
            if self.matches(cand, view):
                return cand
        return None

    def _guess_max_formula(self, view: View, depth: int) -> F.Formula | None:
        rows = []
        for e in view.elems:
            items = _unfold_max(e)
            if items is None or len(items) != self.spec.live:
                return None
            rows.append(items)
        arg_dims = self._reduce_arg_dims(view, self.spec.live)
        if arg_dims is None:
            return None
        arg = View(arg_dims, tuple(itertools.chain.from_iterable(rows)))
        g = self.top_down(arg, depth + 1)
        if g is not None:
            cand = F.Reduce("max", g)
            if self.matches(cand, view):
                return cand
        return None

    def _ifpos_split(self, view: View, depth: int) -> F.Formula | None:
        conds, thens, others = [], [], []
        for e in view.elems:
            c, a, b = e.args
            if c.kind != "cmp" or c.payload != "gt":
                return None
            conds.append(T.canon(T.sub(c.args[0], c.args[1])))
            thens.append(a)
            others.append(b)
        cf = self.top_down(View(view.dims, tuple(conds)), depth + 1)
        tf = self.top_down(View(view.dims, tuple(thens)), depth + 1) if cf is not None else None
        ef = self.top_down(View(view.dims, tuple(others)), depth + 1) if tf is not None else None
        if cf is not None and tf is not None and ef is not None:
            cand = F.IfPos(cf, tf, ef)
            if self.matches(cand, view):
                return cand
        return None

    # ------------------------------------------------------------------
    # candidate acceptance

    def check_candidate(self, f: F.Formula):
        """accepted | rejected | unknown, with a witness binding on rejection."""
        self.stats.candidates_checked += 1
        cand = self.eval_into(f, self.out_view.dims)
        if cand is None:
            return "rejected", None
        if cand == self.out_view.elems:
            return "accepted", None
        if not self.cfg.always_solver:
            witness = self._counterexample(cand)
            if witness is not None:
                return "rejected", witness
        self.stats.solver_calls += 1
        script = disequality_script(cand, self.out_view.elems, self._axioms)
        verdict = self.backend.check(script, "candidate")
        if verdict.is_unsat:
            return "accepted", None
        if verdict.is_sat:
            return "rejected", verdict.model
        return "unknown", None

    def _counterexample(self, cand: tuple, tries: int = 8):
        rng = random.Random(20240 + len(cand))
        elems = sorted({p for e in cand + self.out_view.elems for p in T.leaves(e).elems})
        for _ in range(tries):
            binding = {p: Fraction(rng.randrange(-300, 301), 97) for p in elems}
            try:
                for c, s in zip(cand, self.out_view.elems):
                    lv = T.substitute(c, binding)
                    rv = T.substitute(s, binding)
                    if isinstance(lv, Fraction) and isinstance(rv, Fraction):
                        if lv != rv:
                            return binding
                    else:
                        lf, rf = float(lv), float(rv)
                        if abs(lf - rf) > 1e-6 * max(1.0, abs(lf), abs(rf)):
                            return binding
            except (T.EvalDomainError, OverflowError):
                continue
        return None

    # ------------------------------------------------------------------
    # bottom-up enumeration

    def bottom_up(self, view: View, max_depth: int, quiet: bool = False) -> F.Formula | None:
        self._tick()
        target_sig = self._view_signature(view)
        hits: list[F.Formula] = []
        plist: list[F.Formula] = []
        seen: set = set()
        fresh_count = 0
        for t in self.terminals:
            if self._admit(t, view, plist, seen, quiet, target_sig, hits) is not None:
                fresh_count += 1
        found = self._scan(hits, view)
        if found is not None:
            return found
        for _depth in range(1, max_depth + 1):
            hits = []
            fresh = self._grow(plist, len(plist) - fresh_count, view, seen, quiet,
                               target_sig, hits)
            fresh_count = len(fresh)
            found = self._scan(hits, view)
            if found is not None:
                return found
            if not fresh:
                break
        return None

    def _scan(self, hits: list, view: View) -> F.Formula | None:
        """Check signature-matching candidates in construction order."""
        checked: set = set()
        for f in hits:
            self._tick()
            if f in checked:
                continue
            checked.add(f)
            if view is self.out_view:
                status, _ = self.check_candidate(f)
                if status == "accepted":
                    return f
            else:
                got = self.eval_into(f, view.dims)
                if got is not None and got == view.elems:
                    return f
        return None

    def _admit(self, f: F.Formula, view: View, plist, seen, quiet, target_sig=None,
               hits: list | None = None):
        """Count, prune, record target-signature hits, dedup, append."""
        if not quiet:
            self.stats.programs_enumerated += 1
            if self.stats.programs_enumerated > self.cfg.node_budget:
                raise SynthTimeout()
        shape = self.shape(f)
        if self.cfg.enable_type_prune and not self._type_keep(shape, view):
            if not quiet:
                self.stats.pruned_type += 1
            return None
        if self.cfg.enable_value_prune and shape is not None and not self._value_keep(f, shape, view):
            if not quiet:
                self.stats.pruned_value += 1
            return None
        if shape is not None:
            sig = self._candidate_sig(f)
            # candidates agreeing with the target on samples are checked even
            # when observational dedup drops them from the growth set
            if hits is not None and target_sig is not None and \
                    self._match_sig(f, view) == target_sig:
                hits.append(f)
        else:
            sig = ("poison", next(self._poison))
        key = (shape, sig)
        if key in seen:
            return None
        seen.add(key)
        plist.append(f)
        return f

    def _grow(self, plist, prev_lo: int, view: View, seen, quiet,
              target_sig=None, hits: list | None = None) -> list[F.Formula]:
        """One growth level: productions touching at least one previous-level
        program (older combinations already exist)."""
        base = list(plist)
        n = len(base)
        new: list[F.Formula] = []

        def admit(f):
            got = self._admit(f, view, plist, seen, quiet, target_sig, hits)
            if got is not None:
                new.append(got)

        for f in base[prev_lo:]:
            self._tick()
            admit(F.Neg(f))
            for name in T.FN_NAMES:
                admit(F.Fn(name, f))
            admit(F.Reduce("sum", f))
            admit(F.Reduce("max", f))
        for i in range(n):
            self._tick()
            for j in range(n):
                if i < prev_lo and j < prev_lo:
                    continue
                f, g = base[i], base[j]
                for op in ("+", "-", "*", "/"):
                    admit(F.Bin(op, f, g))
                admit(F.MatMul(f, g))
        inputs = [F.Input(t.name) for t in self.spec.inputs]
        for c in inputs:
            for i in range(n):
                self._tick()
                for j in range(n):
                    if i < prev_lo and j < prev_lo:
                        continue
                    admit(F.IfPos(c, base[i], base[j]))
        return new

    def prune_type(self, f: F.Formula, view: View | None = None) -> bool:
        """keep (True) / drop (False): ill-typed or unable to reach the
        output shape within the remaining depth budget."""
        view = view or self.out_view
        return self._type_keep(self.shape(f), view)

    def prune_value(self, f: F.Formula, view: View | None = None) -> bool:
        """keep/drop by the probe-position leaf rule: a candidate touching an
        element the output never reads cannot contribute."""
        view = view or self.out_view
        shape = self.shape(f)
        if shape is None:
            return True
        return self._value_keep(f, shape, view)

    def _type_keep(self, shape: tuple | None, view: View) -> bool:
        if shape is None:
            return False
        pool = [t.dims for t in self.spec.inputs] + [()]
        closure = {shape}
        frontier = {shape}
        for _ in range(3):
            if any(self._fits(s, view.dims) for s in closure):
                return True
            grown: set = set()
            for s in frontier:
                if len(s) == 2:
                    grown.add((s[1], s[0]))
                    grown.add((s[0], 1))
                for u in pool:
                    b = F.broadcast(s, u)
                    if b is not None:
                        grown.add(b)
                    if len(s) == 2 and len(u) == 2:
                        if s[1] == u[0]:
                            grown.add((s[0], u[1]))
                        if u[1] == s[0]:
                            grown.add((u[0], s[1]))
            frontier = grown - closure
            closure |= grown
            if not frontier:
                break
        return any(self._fits(s, view.dims) for s in closure)

    @staticmethod
    def _fits(shape: tuple, target: tuple) -> bool:
        if F.squeeze(shape) == F.squeeze(target):
            return True
        b = F.broadcast(shape, target)
        return b is not None and F.squeeze(b) == F.squeeze(target) and len(shape) <= len(target)

    def _value_keep(self, f: F.Formula, shape: tuple, view: View) -> bool:
        probe_leaves = T.leaves(view.elems[0]).elems if view is not self.out_view else self._probe_leaves
        try:
            probe = self._term_eval.at(f, (0,) * len(shape))
        except Exception:
            return True
        return T.leaves(probe).elems <= probe_leaves

    # --- numeric signatures ---

    def _candidate_sig(self, f: F.Formula):
        """Dedup signature at the formula's own shape."""
        sig = []
        for ev in self._num_evals:
            try:
                flat = ev.flat(f)
            except (T.EvalDomainError, OverflowError, ZeroDivisionError):
                sig.append(("domain-error",))
                continue
            sig.append(tuple(_sig_round(v) for v in flat))
        return tuple(sig)

    def _match_sig(self, f: F.Formula, view: View):
        """Signature broadcast into the target dims (None when shapes differ)."""
        shape = self.shape(f)
        if shape is None or not self._fits(shape, view.dims):
            return None
        own = F.squeeze(shape) == F.squeeze(view.dims)
        sig = []
        for ev in self._num_evals:
            try:
                flat = ev.flat(f) if own else ev.flat(f, view.dims)
            except (T.EvalDomainError, OverflowError, ZeroDivisionError):
                sig.append(("domain-error",))
                continue
            sig.append(tuple(_sig_round(v) for v in flat))
        return tuple(sig)

    def _view_signature(self, view: View):
        sig = []
        for arrays in self._bindings:
            binding = {}
            for t in self.spec.inputs:
                for i, v in enumerate(arrays[t.name]):
                    binding[(t.pos, t.name, i)] = v
            try:
                vals = [T.substitute(e, binding) for e in view.elems]
            except (T.EvalDomainError, OverflowError):
                sig.append(("domain-error",))
                continue
            sig.append(tuple(_sig_round(v) for v in vals))
        return tuple(sig)


def _sig_round(v):
    if isinstance(v, Fraction):
        return v
    return round(float(v), 10)


def _sample_bindings(spec: LiftSpec, count: int) -> list[dict]:
    """Fixed random-rational input arrays for signatures and fast rejection."""
    rng = random.Random(94321)
    out = []
    for _ in range(count):
        arrays = {}
        for t in spec.inputs:
            n = max(1, len(t.elements))
            arrays[t.name] = [Fraction(rng.randrange(30, 260), 101) for _ in range(n)]
        out.append(arrays)
    return out


# ---------------------------------------------------------------------------
# structural guesses (exposed for tests)


@dataclass(frozen=True)
class SumShape:
    kind: str  # plain | dot
    args: tuple


def split_by(view: View, op: str) -> tuple[View, View] | None:
    """Public splitBy: Some iff every element's canon root is ``op``."""
    kind = {"+": "add", "*": "mul", "/": "div"}.get(op, op)
    if not all(e.kind == kind for e in view.elems):
        return None
    left = View(view.dims, tuple(e.args[0] for e in view.elems))
    right = View(view.dims, tuple(e.args[1] for e in view.elems))
    return left, right


def guess_sum(view: View, live: int) -> SumShape | None:
    chains = []
    for e in view.elems:
        if e.kind != "add":
            return None
        parts = T.chain(e, "add")
        chains.append(parts)
    k = len(chains[0])
    if k < 2 or any(len(c) != k for c in chains):
        return None
    dot = _guess_dot(view, chains)
    if dot is not None:
        return dot
    if k != live:
        return None
    base = F.squeeze(view.dims)
    if base == ():
        arg_dims: tuple = (1, k)
    elif len(base) == 1:
        arg_dims = (base[0], k)
    else:
        return None
    elems = tuple(itertools.chain.from_iterable(chains))
    return SumShape("plain", (View(arg_dims, elems),))


def _guess_dot(view: View, chains: list) -> SumShape | None:
    dims = view.dims
    if len(dims) != 2 or dims[1] < 2:
        return None
    r, c = dims
    k = len(chains[0])
    pairs: dict[tuple, list] = {}
    for i in range(r):
        for j in range(c):
            parts = chains[i * c + j]
            for m, addend in enumerate(parts):
                if addend.kind != "mul":
                    return None
                factors = T.chain(addend, "mul")
                if len(factors) != 2:
                    return None
                pairs[(i, j, m)] = factors
    left: dict = {}
    right: dict = {}
    for i in range(r):
        for m in range(k):
            common = set(pairs[(i, 0, m)])
            for j in range(1, c):
                common &= set(pairs[(i, j, m)])
            if len(common) != 1:
                return None
            lterm = next(iter(common))
            left[(i, m)] = lterm
            for j in range(c):
                fs = list(pairs[(i, j, m)])
                fs.remove(lterm)
                rterm = fs[0]
                if (m, j) in right and right[(m, j)] is not rterm:
                    return None
                right[(m, j)] = rterm
    lview = View((r, k), tuple(left[(i, m)] for i in range(r) for m in range(k)))
    rview = View((k, c), tuple(right[(m, j)] for m in range(k) for j in range(c)))
    return SumShape("dot", (lview, rview))


def _unfold_max(t: T.SymTerm) -> list | None:
    if t.kind != "ite":
        return None
    cond, a, b = t.args
    if cond.kind != "cmp" or cond.payload != "gt" or cond.args != (a, b):
        return None
    prefix = _unfold_max(a)
    if prefix is None:
        prefix = [a]
    return prefix + [b]
