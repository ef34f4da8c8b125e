"""Tiny s-expression reader used by the term codec and the protocol DSL.

Atoms are bare symbols; lists are parenthesised; `;;` (or any `;`) starts a
comment running to end of line. Every node remembers the line/column it
started at so later passes can report positioned errors.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ParseError

_SYMBOL_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-+*/.?!<>=|'")


@dataclass(frozen=True)
class Sym:
    text: str
    line: int
    col: int

    def __repr__(self):
        return self.text


@dataclass(frozen=True)
class SList:
    items: tuple
    line: int
    col: int

    def __repr__(self):
        return "(" + " ".join(repr(i) for i in self.items) + ")"

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def head(self):
        if self.items and isinstance(self.items[0], Sym):
            return self.items[0].text
        return None


def tokenize(text):
    line, col = 1, 1
    i, n = 0, len(text)
    out = []
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            out.append((ch, line, col))
            col += 1
            i += 1
        elif ch in _SYMBOL_CHARS:
            start = i
            scol = col
            while i < n and text[i] in _SYMBOL_CHARS:
                i += 1
                col += 1
            out.append((text[start:i], line, scol))
        else:
            raise ParseError([(line, col, "unexpected character %r" % ch)])
    return out


def read_all(text):
    """Parse `text` into a list of top-level s-expression nodes."""
    toks = tokenize(text)
    pos = 0

    def read_one():
        nonlocal pos
        tok, line, col = toks[pos]
        pos += 1
        if tok == "(":
            items = []
            while True:
                if pos >= len(toks):
                    raise ParseError([(line, col, "unclosed '('")])
                if toks[pos][0] == ")":
                    pos += 1
                    return SList(tuple(items), line, col)
                items.append(read_one())
        if tok == ")":
            raise ParseError([(line, col, "unmatched ')'")])
        return Sym(tok, line, col)

    forms = []
    while pos < len(toks):
        forms.append(read_one())
    return forms


def read_one(text):
    forms = read_all(text)
    if not forms:
        raise ParseError([(1, 1, "empty input")])
    if len(forms) > 1:
        extra = forms[1]
        raise ParseError([(extra.line, extra.col, "trailing content after first form")])
    return forms[0]
