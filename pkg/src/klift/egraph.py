"""E-graph with equality saturation over tensor formulas.

Classic worklist design: hash-consed e-nodes, union-find over class ids, and
congruence restoration by rebuilding after each batch of merges.  Classes
carry three analyses the rewrite guards need: constant value, shape, and
sign (with exp/sqrt/abs treated by their axioms).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from . import formula as F

# formula constructor ops; payload is the name/value for leaf-ish ops
_FN_OPS = ("exp", "log", "sin", "cos", "sqrt", "tanh", "abs")


@dataclass(frozen=True)
class ENode:
    op: str
    payload: object
    children: tuple[int, ...]


@dataclass
class EClass:
    nodes: list[ENode] = field(default_factory=list)
    parents: list[tuple[ENode, int]] = field(default_factory=list)
    const: Fraction | None = None
    shape: tuple | None = None


class MergeConflict(AssertionError):
    pass


class EGraph:
    def __init__(self, dims: dict | None = None, check_congruence: bool = False):
        self.dims = dims or {}
        self.uf: list[int] = []
        self.classes: dict[int, EClass] = {}
        self.hashcons: dict[ENode, int] = {}
        self.worklist: list[int] = []
        self.n_merges = 0
        self.check_after_rebuild = check_congruence
        self.saturated_incomplete = False

    # ----- union-find -----

    def find(self, a: int) -> int:
        while self.uf[a] != a:
            self.uf[a] = self.uf[self.uf[a]]
            a = self.uf[a]
        return a

    def _canonicalize(self, node: ENode) -> ENode:
        return ENode(node.op, node.payload, tuple(self.find(c) for c in node.children))

    # ----- construction -----

    def add(self, node: ENode) -> int:
        node = self._canonicalize(node)
        hit = self.hashcons.get(node)
        if hit is not None:
            return self.find(hit)
        cid = len(self.uf)
        self.uf.append(cid)
        cls = EClass(nodes=[node])
        cls.const = self._node_const(node)
        cls.shape = self._node_shape(node)
        self.classes[cid] = cls
        self.hashcons[node] = cid
        for child in node.children:
            self.classes[self.find(child)].parents.append((node, cid))
        if cls.const is not None and node.op != "const":
            self.merge(cid, self.add(ENode("const", cls.const, ())))
            self.rebuild()
            return self.find(cid)
        return cid

    def add_formula(self, f: F.Formula) -> int:
        match f:
            case F.Input(name):
                return self.add(ENode("input", name, ()))
            case F.Const(q):
                return self.add(ENode("const", q, ()))
            case F.NamedConst(key):
                return self.add(ENode("named", key, ()))
            case F.Neg(x):
                return self.add(ENode("neg", None, (self.add_formula(x),)))
            case F.Fn(name, x):
                return self.add(ENode(name, None, (self.add_formula(x),)))
            case F.Bin(op, l, r):
                return self.add(ENode(op, None, (self.add_formula(l), self.add_formula(r))))
            case F.Reduce(kind, x):
                return self.add(ENode(kind, None, (self.add_formula(x),)))
            case F.MatMul(l, r):
                return self.add(ENode("matmul", None, (self.add_formula(l), self.add_formula(r))))
            case F.Transpose(x):
                return self.add(ENode("transpose", None, (self.add_formula(x),)))
            case F.IfPos(c, a, b):
                return self.add(
                    ENode("ifpos", None,
                          (self.add_formula(c), self.add_formula(a), self.add_formula(b)))
                )
        raise AssertionError(f)

    # ----- merging and congruence -----

    def merge(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        self.n_merges += 1
        # keep the smaller id as root for determinism
        if b < a:
            a, b = b, a
        ca, cb = self.classes[a], self.classes[b]
        if ca.const is not None and cb.const is not None and ca.const != cb.const:
            raise MergeConflict(f"constants {ca.const} != {cb.const} merged")
        if ca.shape is not None and cb.shape is not None:
            if F.squeeze(ca.shape) != F.squeeze(cb.shape) and \
               F.broadcast(ca.shape, cb.shape) is None:
                raise MergeConflict(f"shapes {ca.shape} / {cb.shape} merged")
        self.uf[b] = a
        ca.nodes.extend(cb.nodes)
        ca.parents.extend(cb.parents)
        ca.const = ca.const if ca.const is not None else cb.const
        ca.shape = ca.shape if ca.shape is not None else cb.shape
        del self.classes[b]
        self.worklist.append(a)
        return a

    def rebuild(self) -> None:
        while self.worklist:
            todo = {self.find(c) for c in self.worklist}
            self.worklist.clear()
            for cid in todo:
                self._repair(cid)
        if self.check_after_rebuild:
            self.assert_congruent()

    def _repair(self, cid: int) -> None:
        cls = self.classes.get(self.find(cid))
        if cls is None:
            return
        new_parents: dict[ENode, int] = {}
        for pnode, pcid in cls.parents:
            canon = self._canonicalize(pnode)
            self.hashcons.pop(pnode, None)
            existing = self.hashcons.get(canon)
            if existing is not None and self.find(existing) != self.find(pcid):
                self.merge(existing, pcid)
            self.hashcons[canon] = self.find(pcid)
            if canon in new_parents:
                if self.find(new_parents[canon]) != self.find(pcid):
                    self.merge(new_parents[canon], pcid)
            new_parents[canon] = self.find(pcid)
        cls.parents = [(n, self.find(c)) for n, c in new_parents.items()]
        # nodes inside the class also need canonical children
        seen: dict[ENode, None] = {}
        for node in cls.nodes:
            seen.setdefault(self._canonicalize(node), None)
        cls.nodes = list(seen.keys())

    def assert_congruent(self) -> None:
        """Congruence invariant: equal canonical nodes live in one class."""
        table: dict[ENode, int] = {}
        for cid in list(self.classes):
            root = self.find(cid)
            if root != cid:
                continue
            for node in self.classes[cid].nodes:
                canon = self._canonicalize(node)
                prev = table.get(canon)
                if prev is not None and self.find(prev) != root:
                    raise AssertionError(
                        f"congruence violated: {canon} in classes {prev} and {root}"
                    )
                table[canon] = root

    # ----- analyses -----

    def _node_const(self, node: ENode) -> Fraction | None:
        if node.op == "const":
            return node.payload
        kids = [self.classes[self.find(c)].const for c in node.children]
        if any(k is None for k in kids):
            return None
        try:
            if node.op == "+":
                return kids[0] + kids[1]
            if node.op == "-":
                return kids[0] - kids[1]
            if node.op == "*":
                return kids[0] * kids[1]
            if node.op == "/" and kids[1] != 0:
                return kids[0] / kids[1]
            if node.op == "neg":
                return -kids[0]
            if node.op == "abs":
                return abs(kids[0])
        except ZeroDivisionError:
            return None
        return None

    def _node_shape(self, node: ENode) -> tuple | None:
        op = node.op
        if op == "input":
            return self.dims.get(node.payload)
        if op in ("const", "named"):
            return ()
        kids = [self.classes[self.find(c)].shape for c in node.children]
        if any(k is None for k in kids):
            return None
        if op in ("+", "-", "*", "/"):
            return F.broadcast(kids[0], kids[1])
        if op in ("neg",) + _FN_OPS:
            return kids[0]
        if op in ("sum", "max"):
            return (kids[0][0], 1) if len(kids[0]) == 2 else None
        if op == "matmul":
            a, b = kids
            if len(a) == 2 and len(b) == 2 and a[1] == b[0]:
                return (a[0], b[1])
            return None
        if op == "transpose":
            return (kids[0][1], kids[0][0]) if len(kids[0]) == 2 else None
        if op == "ifpos":
            return F.broadcast(F.broadcast(kids[0], kids[1]), kids[2])
        return None

    def sign(self, cid: int, _seen: frozenset = frozenset()) -> str | None:
        """"+" strictly positive, "0+" nonnegative, None unknown."""
        cid = self.find(cid)
        if cid in _seen:
            return None
        seen = _seen | {cid}
        cls = self.classes[cid]
        if cls.const is not None:
            return "+" if cls.const > 0 else ("0+" if cls.const == 0 else None)
        best = None
        for node in cls.nodes:
            s = self._node_sign(node, seen)
            if s == "+":
                return "+"
            if s == "0+":
                best = "0+"
        return best

    def _node_sign(self, node: ENode, seen: frozenset) -> str | None:
        op = node.op
        if op == "named":
            return "+"  # every dictionary constant is positive
        if op == "exp":
            return "+"
        if op == "abs":
            return "0+"
        if op == "sqrt":
            s = self.sign(node.children[0], seen)
            return "0+" if s in ("+", "0+") else None
        kids = lambda: [self.sign(c, seen) for c in node.children]
        if op in ("+", "sum"):
            ks = kids()
            if all(k == "+" for k in ks):
                return "+"
            if all(k in ("+", "0+") for k in ks):
                return "+" if any(k == "+" for k in ks) and op == "+" else "0+"
            return None
        if op in ("*", "/"):
            ks = kids()
            if all(k == "+" for k in ks):
                return "+"
            if all(k in ("+", "0+") for k in ks):
                return "0+"
            return None
        if op == "max":
            s = self.sign(node.children[0], seen)
            return s if s in ("+", "0+") else None
        if op == "ifpos":
            a = self.sign(node.children[1], seen)
            b = self.sign(node.children[2], seen)
            if a == b and a is not None:
                return a
            if a in ("+", "0+") and b in ("+", "0+"):
                return "0+"
        return None

    def class_count(self) -> int:
        return len({self.find(c) for c in range(len(self.uf))})

    def node_count(self) -> int:
        return sum(len(c.nodes) for c in self.classes.values())


# ---------------------------------------------------------------------------
# patterns and rewrite rules


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PNode:
    op: str
    payload: object
    children: tuple


Pattern = PVar | PNode


@dataclass(frozen=True)
class RewriteRule:
    name: str
    lhs: Pattern
    rhs: Pattern
    guards: tuple = ()  # (guard_name, var names...)


def ematch(eg: EGraph, pat: Pattern, cid: int, subst: dict) -> list[dict]:
    cid = eg.find(cid)
    if isinstance(pat, PVar):
        bound = subst.get(pat.name)
        if bound is None:
            out = dict(subst)
            out[pat.name] = cid
            return [out]
        return [subst] if eg.find(bound) == cid else []
    results = []
    for node in eg.classes[cid].nodes:
        if node.op != pat.op:
            continue
        if pat.payload is not None and node.payload != pat.payload:
            continue
        if len(node.children) != len(pat.children):
            continue
        stack = [subst]
        for cpat, ccid in zip(pat.children, node.children):
            stack = [s2 for s in stack for s2 in ematch(eg, cpat, ccid, s)]
            if not stack:
                break
        results.extend(stack)
    return results


def instantiate(eg: EGraph, pat: Pattern, subst: dict) -> int:
    if isinstance(pat, PVar):
        return eg.find(subst[pat.name])
    children = tuple(instantiate(eg, c, subst) for c in pat.children)
    return eg.add(ENode(pat.op, pat.payload, children))


GUARDS = {}


def guard(name):
    def deco(fn):
        GUARDS[name] = fn
        return fn
    return deco


@guard("nonzero")
def _g_nonzero(eg: EGraph, cids: list[int]) -> bool:
    cls = eg.classes[eg.find(cids[0])]
    if cls.const is not None:
        return cls.const != 0
    return eg.sign(cids[0]) == "+"


@guard("positive")
def _g_positive(eg: EGraph, cids: list[int]) -> bool:
    return eg.sign(cids[0]) == "+"


@guard("const-nonzero")
def _g_const_nonzero(eg: EGraph, cids: list[int]) -> bool:
    c = eg.classes[eg.find(cids[0])].const
    return c is not None and c != 0


@guard("rowconst")
def _g_rowconst(eg: EGraph, cids: list[int]) -> bool:
    """cids = (b, a): b varies at most per-row of the reduced tensor a."""
    sb = eg.classes[eg.find(cids[0])].shape
    sa = eg.classes[eg.find(cids[1])].shape
    if sb is None or sa is None or len(sa) != 2:
        return False
    sq = F.squeeze(sb)
    return sq == () or sq == (sa[0],)


@dataclass
class SaturationLimits:
    iterations: int = 30
    node_budget: int = 50_000
    matches_per_rule: int = 400  # backoff-style cap per rule per iteration


def saturate(eg: EGraph, rules: list[RewriteRule], limits: SaturationLimits | None = None) -> EGraph:
    """Match all rules, apply as a batch, rebuild; repeat to fixpoint/limits."""
    limits = limits or SaturationLimits()
    for _ in range(limits.iterations):
        merges_before = eg.n_merges
        nodes_before = len(eg.hashcons)
        matches = []
        for rule in rules:
            per_rule = 0
            for cid in sorted(eg.classes):
                if eg.find(cid) != cid:
                    continue
                for subst in ematch(eg, rule.lhs, cid, {}):
                    if all(
                        GUARDS[g[0]](eg, [subst[v] for v in g[1:]]) for g in rule.guards
                    ):
                        matches.append((rule, cid, subst))
                        per_rule += 1
                        if per_rule >= limits.matches_per_rule:
                            break
                if per_rule >= limits.matches_per_rule:
                    eg.saturated_incomplete = True
                    break
        for rule, cid, subst in matches:
            if len(eg.hashcons) > limits.node_budget:
                eg.saturated_incomplete = True
                eg.rebuild()
                return eg
            new_id = instantiate(eg, rule.rhs, subst)
            eg.merge(cid, new_id)
        eg.rebuild()
        if eg.n_merges == merges_before and len(eg.hashcons) == nodes_before:
            break
    else:
        eg.saturated_incomplete = True
    return eg


# ---------------------------------------------------------------------------
# extraction


@dataclass
class CostModel:
    weights: dict = field(default_factory=dict)
    default_weight: float = 1.0
    named_const_weight: float = 0.5  # the named-constant bonus

    def weight(self, node: ENode) -> float:
        if node.op == "named":
            return self.named_const_weight
        return self.weights.get(node.op, self.default_weight)


_OP_ORDER = ["const", "named", "input", "neg", "exp", "log", "sin", "cos", "sqrt", "tanh",
             "abs", "sum", "max", "transpose", "+", "-", "*", "/", "matmul", "ifpos"]


def _node_key(node: ENode) -> tuple:
    rank = _OP_ORDER.index(node.op) if node.op in _OP_ORDER else len(_OP_ORDER)
    return (rank, str(node.payload), node.children)


def extract(eg: EGraph, root: int, cost: CostModel | None = None) -> F.Formula:
    cost = cost or CostModel()
    best: dict[int, tuple[float, ENode]] = {}
    changed = True
    while changed:
        changed = False
        for cid in sorted(eg.classes):
            if eg.find(cid) != cid:
                continue
            for node in eg.classes[cid].nodes:
                kids = [best.get(eg.find(c)) for c in node.children]
                if any(k is None for k in kids):
                    continue
                total = cost.weight(node) + sum(k[0] for k in kids)
                cur = best.get(cid)
                if cur is None or (total, _node_key(node)) < (cur[0], _node_key(cur[1])):
                    best[cid] = (total, node)
                    changed = True
    entry = best.get(eg.find(root))
    if entry is None:
        raise ValueError("no finite-cost term in the root class")
    return _build(eg, best, eg.find(root))


def extract_cost(eg: EGraph, root: int, cost: CostModel | None = None) -> float:
    cost = cost or CostModel()
    f = extract(eg, root, cost)
    return formula_cost(f, cost)


def formula_cost(f: F.Formula, cost: CostModel | None = None) -> float:
    cost = cost or CostModel()
    match f:
        case F.Input(_):
            return cost.weights.get("input", cost.default_weight)
        case F.Const(_):
            return cost.weights.get("const", cost.default_weight)
        case F.NamedConst(_):
            return cost.named_const_weight
        case F.Neg(x):
            return cost.weights.get("neg", cost.default_weight) + formula_cost(x, cost)
        case F.Fn(name, x):
            return cost.weights.get(name, cost.default_weight) + formula_cost(x, cost)
        case F.Reduce(kind, x):
            return cost.weights.get(kind, cost.default_weight) + formula_cost(x, cost)
        case F.Transpose(x):
            return cost.weights.get("transpose", cost.default_weight) + formula_cost(x, cost)
        case F.Bin(op, l, r):
            return cost.weights.get(op, cost.default_weight) + formula_cost(l, cost) + formula_cost(r, cost)
        case F.MatMul(l, r):
            return cost.weights.get("matmul", cost.default_weight) + formula_cost(l, cost) + formula_cost(r, cost)
        case F.IfPos(c, a, b):
            return (cost.weights.get("ifpos", cost.default_weight)
                    + formula_cost(c, cost) + formula_cost(a, cost) + formula_cost(b, cost))
    raise AssertionError(f)


def _build(eg: EGraph, best: dict, cid: int) -> F.Formula:
    _, node = best[cid]
    kids = [_build(eg, best, eg.find(c)) for c in node.children]
    op = node.op
    if op == "input":
        return F.Input(node.payload)
    if op == "const":
        return F.Const(node.payload)
    if op == "named":
        return F.NamedConst(node.payload)
    if op == "neg":
        return F.Neg(kids[0])
    if op in _FN_OPS:
        return F.Fn(op, kids[0])
    if op in ("sum", "max"):
        return F.Reduce(op, kids[0])
    if op in ("+", "-", "*", "/"):
        return F.Bin(op, kids[0], kids[1])
    if op == "matmul":
        return F.MatMul(kids[0], kids[1])
    if op == "transpose":
        return F.Transpose(kids[0])
    if op == "ifpos":
        return F.IfPos(kids[0], kids[1], kids[2])
    raise AssertionError(op)
