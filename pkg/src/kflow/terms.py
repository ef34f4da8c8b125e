"""Interned free term algebra for the value universe.

Every term is hash-consed inside a `TermTable`: building the same structure
twice returns the identical Python object, so structural equality is object
identity and term sets are cheap. Tables are append-only; interning is the
only mutation and it is guarded by a lock, so concurrent analyses may share
one table.

Terms are finite and acyclic by construction. There is deliberately no way
to build a term that contains itself; the node-table JSON loader rejects
inputs that try.
"""

from __future__ import annotations

import threading
from typing import Iterable, Optional

from .errors import ResourceError, TermError, ValidationError
from . import sexpr

# Constructor tags in canonical rank order. The rank induces the total
# order used everywhere determinism matters (set iteration, trace output,
# canonical form of unordered sets).
EPS = "eps"
ATOM = "atom"
IDENT = "id"
VAR = "var"
PK = "pk"
ENC = "enc"
SIG = "sig"
HASH = "hash"
NONCE = "nonce"
PAIR = "pair"
SET = "set"
RULEVAL = "rule-val"

TAG_RANK = {
    EPS: 0, ATOM: 1, IDENT: 2, VAR: 3, PK: 4, ENC: 5,
    SIG: 6, HASH: 7, NONCE: 8, PAIR: 9, SET: 10, RULEVAL: 11,
}

_LEAF_TAGS = {EPS, ATOM, IDENT, VAR}
_UNARY_TAGS = {PK, HASH}
_BINARY_TAGS = {ENC, SIG, NONCE, PAIR, SET, RULEVAL}
CONSTRUCTOR_TAGS = _UNARY_TAGS | _BINARY_TAGS

DEFAULT_UNIVERSE_CAP = 200_000


class Term:
    """One interned node. Compare with `is`/`==` (same thing here)."""

    __slots__ = ("tag", "name", "children", "uid", "depth", "has_vars", "table", "_key")

    def __init__(self, tag, name, children, uid, table):
        self.tag = tag
        self.name = name
        self.children = children
        self.uid = uid
        self.table = table
        self.depth = 0 if not children else 1 + max(c.depth for c in children)
        self.has_vars = tag == VAR or any(c.has_vars for c in children)
        self._key = None

    def sort_key(self):
        if self._key is None:
            rank = TAG_RANK[self.tag]
            if self.children:
                self._key = (rank,) + tuple(c.sort_key() for c in self.children)
            else:
                self._key = (rank, self.name or "")
        return self._key

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def is_ground(self):
        return not self.has_vars

    def subterms(self):
        return subterms(self)

    def __repr__(self):
        return to_sexpr(self)


def _check_name(name):
    if not name or not isinstance(name, str):
        raise TermError("constructor requires a nonempty name")
    if name == "eps":
        raise TermError("the name 'eps' is reserved for the epsilon constant")
    for ch in name:
        if ch not in sexpr._SYMBOL_CHARS or ch in "()|":
            raise TermError("name %r contains a character that cannot round-trip" % name)


class TermTable:
    """Hash-consing store. One per analysis context, or share the default."""

    def __init__(self):
        self._store = {}
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._store)

    def intern(self, tag, name=None, children=()):
        children = tuple(children)
        if tag not in TAG_RANK:
            raise TermError("unknown constructor tag %r" % tag)
        if tag in _LEAF_TAGS:
            if children:
                raise TermError("%s takes no children" % tag)
            if tag == EPS:
                if name is not None:
                    raise TermError("eps takes no name")
            else:
                _check_name(name)
        else:
            if name is not None:
                raise TermError("%s takes no name" % tag)
            want = 1 if tag in _UNARY_TAGS else 2
            if len(children) != want:
                raise TermError("%s takes %d child(ren), got %d" % (tag, want, len(children)))
            for c in children:
                if not isinstance(c, Term):
                    raise TermError("children must be interned terms")
                if c.table is not self:
                    raise TermError("child term belongs to a different table")
            if tag == NONCE and children[1].tag not in (IDENT, VAR):
                raise TermError("nonce identity slot must be an identity or a variable")
            if tag == SET and children[1].sort_key() < children[0].sort_key():
                children = (children[1], children[0])
        key = (tag, name, tuple(c.uid for c in children))
        hit = self._store.get(key)
        if hit is not None:
            return hit
        with self._lock:
            hit = self._store.get(key)
            if hit is None:
                hit = Term(tag, name, children, len(self._store), self)
                self._store[key] = hit
            return hit

    # Typed conveniences.
    def atom(self, name):
        return self.intern(ATOM, name)

    def eps(self):
        return self.intern(EPS)

    def ident(self, principal_name):
        return self.intern(IDENT, principal_name)

    def var(self, name):
        return self.intern(VAR, name)

    def pk(self, secret):
        return self.intern(PK, children=(secret,))

    def enc(self, key, payload):
        return self.intern(ENC, children=(key, payload))

    def sig(self, key, payload):
        return self.intern(SIG, children=(key, payload))

    def hashed(self, t):
        return self.intern(HASH, children=(t,))

    def nonce(self, seed, identity):
        return self.intern(NONCE, children=(seed, identity))

    def pair(self, left, right):
        return self.intern(PAIR, children=(left, right))

    def set2(self, a, b):
        return self.intern(SET, children=(a, b))

    def rule_val(self, premise, conclusion):
        return self.intern(RULEVAL, children=(premise, conclusion))


DEFAULT_TABLE = TermTable()


def is_ground(t: Term) -> bool:
    return not t.has_vars


def subterms(t: Term) -> frozenset:
    """Reflexive-transitive child closure."""
    seen = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(cur.children)
    return frozenset(seen)


def free_vars(t: Term) -> frozenset:
    if not t.has_vars:
        return frozenset()
    out = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur.tag == VAR:
            out.add(cur.name)
        else:
            stack.extend(c for c in cur.children if c.has_vars)
    return frozenset(out)


def enumerate_universe(atoms, constructors, max_depth, cap=DEFAULT_UNIVERSE_CAP):
    """All ground terms over `atoms` and the given constructor tags, with
    nesting depth <= max_depth, in canonical order.

    `atoms` may contain any depth-0 ground leaves (atoms, identities, eps);
    nonce identity slots draw only from the identity leaves among them.
    """
    leaves = sorted(set(atoms), key=Term.sort_key)
    if not leaves:
        return ()
    table = leaves[0].table
    for t in leaves:
        if t.depth != 0 or t.has_vars:
            raise ValidationError("universe atoms must be ground leaves, got %r" % t)
        if t.table is not table:
            raise ValidationError("universe atoms come from different term tables")
    ctors = []
    for tag in sorted(set(constructors), key=lambda c: TAG_RANK.get(c, -1)):
        if tag not in CONSTRUCTOR_TAGS:
            raise ValidationError("not a constructor tag: %r" % tag)
        ctors.append(tag)
    if max_depth < 0:
        raise ValidationError("max_depth must be >= 0")

    identities = [t for t in leaves if t.tag == IDENT]
    everything = set(leaves)
    frontier = list(leaves)  # terms of the previous depth level
    cumulative = list(leaves)
    for _ in range(max_depth):
        new = set()

        def emit(t):
            if t not in everything and t not in new:
                new.add(t)
                if len(everything) + len(new) > cap:
                    raise ResourceError(
                        "universe exceeds cap of %d terms" % cap,
                        count=len(everything) + len(new), cap=cap)

        for tag in ctors:
            if tag in _UNARY_TAGS:
                for c in frontier:
                    emit(table.intern(tag, children=(c,)))
            elif tag == NONCE:
                for seed in frontier:
                    for ident in identities:
                        emit(table.intern(NONCE, children=(seed, ident)))
                # identity slots are depth 0, so new nonces only need new seeds
            else:
                # binary: at least one child from the frontier
                for a in frontier:
                    for b in cumulative:
                        emit(table.intern(tag, children=(a, b)))
                        emit(table.intern(tag, children=(b, a)))
        if not new:
            break
        everything |= new
        frontier = sorted(new, key=Term.sort_key)
        cumulative = sorted(everything, key=Term.sort_key)
    return tuple(sorted(everything, key=Term.sort_key))


# ---------------------------------------------------------------------------
# Serialization: canonical s-expressions and JSON (tree + shared-node forms).

def to_sexpr(t: Term) -> str:
    if t.tag == EPS:
        return "eps"
    if t.tag == ATOM:
        return t.name
    if t.tag in (IDENT, VAR):
        return "(%s %s)" % (t.tag, t.name)
    return "(%s %s)" % (t.tag, " ".join(to_sexpr(c) for c in t.children))


def _term_from_node(node, table):
    if isinstance(node, sexpr.Sym):
        if node.text == "eps":
            return table.eps()
        return table.atom(node.text)
    head = node.head()
    if head is None:
        raise ValidationError("expected a term, got %r" % (node,))
    args = node.items[1:]
    if head in (IDENT, VAR):
        if len(args) != 1 or not isinstance(args[0], sexpr.Sym):
            raise ValidationError("(%s name) takes one symbol" % head)
        return table.intern(head, args[0].text)
    if head in CONSTRUCTOR_TAGS:
        want = 1 if head in _UNARY_TAGS else 2
        if len(args) != want:
            raise ValidationError("(%s ...) takes %d argument(s)" % (head, want))
        return table.intern(head, children=tuple(_term_from_node(a, table) for a in args))
    raise ValidationError("unknown term form %r" % head)


def from_sexpr(text: str, table: Optional[TermTable] = None) -> Term:
    return _term_from_node(sexpr.read_one(text), table or DEFAULT_TABLE)


def to_json_tree(t: Term) -> dict:
    if t.tag in _LEAF_TAGS:
        d = {"kind": t.tag}
        if t.name is not None:
            d["name"] = t.name
        return d
    return {"kind": t.tag, "children": [to_json_tree(c) for c in t.children]}


def from_json_tree(d, table: Optional[TermTable] = None) -> Term:
    table = table or DEFAULT_TABLE
    if not isinstance(d, dict) or "kind" not in d:
        raise ValidationError("term JSON must be an object with a 'kind'")
    kind = d["kind"]
    if kind in _LEAF_TAGS:
        return table.intern(kind, d.get("name"))
    if kind in CONSTRUCTOR_TAGS:
        kids = d.get("children")
        if not isinstance(kids, list):
            raise ValidationError("%r term needs a 'children' list" % kind)
        return table.intern(kind, children=tuple(from_json_tree(c, table) for c in kids))
    raise ValidationError("unknown term kind %r" % kind)


def to_json_nodes(t: Term) -> dict:
    """Shared-node encoding: children are indices into a node list."""
    index = {}
    nodes = []

    def visit(cur):
        if cur in index:
            return index[cur]
        kids = [visit(c) for c in cur.children]
        entry = {"kind": cur.tag}
        if cur.name is not None:
            entry["name"] = cur.name
        if kids:
            entry["children"] = kids
        nodes.append(entry)
        index[cur] = len(nodes) - 1
        return index[cur]

    root = visit(t)
    return {"nodes": nodes, "root": root}


def from_json_nodes(d, table: Optional[TermTable] = None) -> Term:
    """Load the shared-node encoding. A node reachable from itself (a cycle)
    is rejected: the value universe has no such terms, so cyclic input is a
    modeling error, not a representable value.
    """
    table = table or DEFAULT_TABLE
    nodes = d.get("nodes")
    root = d.get("root")
    if not isinstance(nodes, list) or not isinstance(root, int):
        raise ValidationError("node-table term JSON needs 'nodes' and integer 'root'")
    if not (0 <= root < len(nodes)):
        raise ValidationError("root index out of range")
    built = [None] * len(nodes)
    IN_PROGRESS = object()

    def build(i):
        if not (0 <= i < len(nodes)):
            raise ValidationError("child index %d out of range" % i)
        if built[i] is IN_PROGRESS:
            raise ValidationError(
                "cyclic term structure at node %d: a term cannot contain itself" % i)
        if built[i] is not None:
            return built[i]
        built[i] = IN_PROGRESS
        entry = nodes[i]
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ValidationError("node %d is not a term object" % i)
        kind = entry["kind"]
        kids = entry.get("children", [])
        if kind in _LEAF_TAGS:
            if kids:
                raise ValidationError("leaf node %d cannot have children" % i)
            built[i] = table.intern(kind, entry.get("name"))
        elif kind in CONSTRUCTOR_TAGS:
            built[i] = table.intern(kind, children=tuple(build(j) for j in kids))
        else:
            raise ValidationError("unknown term kind %r at node %d" % (kind, i))
        return built[i]

    return build(root)


def term_from_json(d, table: Optional[TermTable] = None) -> Term:
    if isinstance(d, dict) and "nodes" in d:
        return from_json_nodes(d, table)
    return from_json_tree(d, table)
