"""Shared oracles used by both the unit suites and the acceptance gate."""

import random
from fractions import Fraction

import numpy as np

from klift import terms as T
from klift.egraph import PVar
from klift.executor import run_concrete
from klift.rules import default_rules

_UNARY_NP = {
    "neg": np.negative, "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos,
    "sqrt": np.sqrt, "tanh": np.tanh, "abs": np.abs,
}


def pattern_eval(pat, env):
    if isinstance(pat, PVar):
        return env[pat.name]
    if pat.op == "const":
        return float(pat.payload)
    args = [pattern_eval(c, env) for c in pat.children]
    if pat.op == "+":
        return args[0] + args[1]
    if pat.op == "-":
        return args[0] - args[1]
    if pat.op == "*":
        return args[0] * args[1]
    if pat.op == "/":
        return args[0] / args[1]
    if pat.op == "sum":
        return np.sum(args[0], axis=-1, keepdims=True)
    if pat.op == "max":
        return np.max(args[0], axis=-1, keepdims=True)
    if pat.op in _UNARY_NP:
        return _UNARY_NP[pat.op](args[0])
    raise AssertionError(pat.op)


def pattern_vars(pat, out):
    if isinstance(pat, PVar):
        out.add(pat.name)
    else:
        for c in pat.children:
            pattern_vars(c, out)


def check_rule_soundness(trials: int = 1000, rel_tol: float = 1e-9) -> int:
    """Numerically validate every default rewrite rule; returns the rule count."""
    rng = np.random.default_rng(2024)
    rules = default_rules()
    for rule in rules:
        vars_: set = set()
        pattern_vars(rule.lhs, vars_)
        pattern_vars(rule.rhs, vars_)
        rules_guard: dict = {}
        for g in rule.guards:
            for v in g[1:]:
                rules_guard.setdefault(v, g[0])
        env = {}
        for v in sorted(vars_):
            shape = (trials, 2, 4)
            if rules_guard.get(v) == "rowconst":
                shape = (trials, 2, 1)
            vals = rng.uniform(-2.0, 2.0, size=shape)
            if rules_guard.get(v) in ("nonzero", "positive", "rowconst"):
                vals = np.abs(vals) + 0.1
            env[v] = vals
        if rule.name.startswith("log") or rule.name == "exp-log":
            env = {v: np.abs(a) + 0.1 for v, a in env.items()}
        with np.errstate(all="ignore"):
            lhs = pattern_eval(rule.lhs, env)
            rhs = pattern_eval(rule.rhs, env)
        lhs, rhs = np.broadcast_arrays(np.asarray(lhs, dtype=float),
                                       np.asarray(rhs, dtype=float))
        mask = np.isfinite(lhs) & np.isfinite(rhs)
        assert mask.mean() > 0.9, rule.name
        err = np.abs(lhs[mask] - rhs[mask]) / np.maximum(1.0, np.abs(lhs[mask]))
        assert float(err.max(initial=0.0)) <= rel_tol, rule.name
    return len(rules)


def check_executor_soundness(kernels: dict, inputs_per_kernel: int = 50) -> None:
    """Substituting the LiftSpec equals concrete interpretation, exactly."""
    rng = random.Random(7040)
    for name, (mod, env, spec) in kernels.items():
        for _ in range(inputs_per_kernel):
            arrays, binding = {}, {}
            for t in spec.inputs:
                vals = [Fraction(rng.randrange(20, 300), 99) for _ in t.elements]
                arrays[t.name] = vals
                binding.update({(t.pos, t.name, i): v for i, v in enumerate(vals)})
            got = run_concrete(mod, env, arrays)
            for out in spec.outputs:
                for i, term in enumerate(out.elements):
                    assert T.substitute(term, binding) == got[out.name][i], name
