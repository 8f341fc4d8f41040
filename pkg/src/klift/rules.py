"""Rewrite-rule loading from the declarative text format.

Users can extend the simplifier by loading extra rule files with the same
syntax as ``rules/default.rules``.
"""

from __future__ import annotations

from fractions import Fraction
from importlib import resources

from .egraph import PNode, Pattern, PVar, RewriteRule, GUARDS
from .smt import sexp


class RuleParseError(ValueError):
    pass


def parse_pattern(e) -> Pattern:
    if isinstance(e, str):
        if e.startswith("?"):
            return PVar(e[1:])
        try:
            return PNode("const", Fraction(e), ())
        except ValueError:
            return PNode("input", e, ())
    if not isinstance(e, list) or not e:
        raise RuleParseError(f"bad pattern {e!r}")
    op = e[0]
    return PNode(op, None, tuple(parse_pattern(x) for x in e[1:]))


def parse_rule(line: str) -> RewriteRule:
    name, _, rest = line.partition(":")
    name = name.strip()
    if not name or not rest:
        raise RuleParseError(f"missing rule name in {line!r}")
    body, _, guard_text = rest.partition(" if ")
    lhs_text, arrow, rhs_text = body.partition("=>")
    if arrow != "=>":
        raise RuleParseError(f"missing => in rule {name}")
    lhs = parse_pattern(_one_sexp(lhs_text))
    rhs = parse_pattern(_one_sexp(rhs_text))
    guards = []
    if guard_text.strip():
        for clause in guard_text.split(","):
            parts = clause.split()
            gname, vars_ = parts[0], parts[1:]
            if gname not in GUARDS:
                raise RuleParseError(f"unknown guard {gname!r} in rule {name}")
            if not all(v.startswith("?") for v in vars_):
                raise RuleParseError(f"guard arguments must be pattern vars in rule {name}")
            guards.append((gname, *[v[1:] for v in vars_]))
    return RewriteRule(name, lhs, rhs, tuple(guards))


def _one_sexp(text: str):
    forms = sexp.parse_all(text)
    if len(forms) != 1:
        raise RuleParseError(f"expected one pattern, got {len(forms)} in {text!r}")
    return forms[0]


def load_rules(text: str) -> list[RewriteRule]:
    rules = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        rules.append(parse_rule(line))
    return rules


def load_rules_file(path: str) -> list[RewriteRule]:
    with open(path, "r", encoding="utf-8") as fh:
        return load_rules(fh.read())


_default_cache: list[RewriteRule] | None = None


def default_rules() -> list[RewriteRule]:
    global _default_cache
    if _default_cache is None:
        text = resources.files("klift").joinpath("rules/default.rules").read_text()
        _default_cache = load_rules(text)
    return list(_default_cache)
