"""Minimal s-expression reader/printer for SMT-LIB2 text.

Atoms are strings; lists are Python lists.  Quoted symbols (|...|) and string
literals are preserved verbatim.  Stdlib-only: the fallback solver imports
this at startup and must stay light.
"""

from __future__ import annotations


class SexpError(ValueError):
    pass


def tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in " \t\r\n":
            i += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in "()":
            yield c
            i += 1
            continue
        if c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SexpError("unterminated quoted symbol")
            yield text[i : j + 1]
            i = j + 1
            continue
        if c == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            if j >= n:
                raise SexpError("unterminated string literal")
            yield text[i : j + 1]
            i = j + 1
            continue
        j = i
        while j < n and text[j] not in " \t\r\n();|\"":
            j += 1
        yield text[i:j]
        i = j


def parse_all(text: str) -> list:
    """Parse a whole script into a list of top-level s-expressions."""
    stack: list[list] = [[]]
    for tok in tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise SexpError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise SexpError("unbalanced '('")
    return stack[0]


def render(e) -> str:
    if isinstance(e, str):
        return e
    return "(" + " ".join(render(x) for x in e) + ")"
