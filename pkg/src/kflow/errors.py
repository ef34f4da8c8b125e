"""Exception types shared across the package."""

from __future__ import annotations


class KflowError(Exception):
    """Base class for all errors raised by this package."""


class TermError(KflowError):
    """Malformed term construction: bad arity, bad child kind, unknown tag."""


class ValidationError(KflowError):
    """Semantically invalid input: unknown names, unbound variables, bad indices."""


class ResourceError(KflowError):
    """A bounded computation exceeded its configured cap."""

    def __init__(self, message, count=None, cap=None):
        super().__init__(message)
        self.count = count
        self.cap = cap


class ParseError(KflowError):
    """Syntax errors with positions.

    `errors` is a list of (line, column, message) triples; parsing collects as
    many as it can before giving up.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        first = self.errors[0] if self.errors else (0, 0, "parse error")
        super().__init__("%d:%d: %s" % first)
