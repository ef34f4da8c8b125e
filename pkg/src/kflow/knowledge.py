"""Knowledge states: which principal knows which value.

A state is an immutable set of (principal-name, term) facts. The analysis
proper only ever tracks the merged adversary's projection; full states exist
for the naive oracle and for the theorem-level cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import FrozenSet, Iterable, Optional, Tuple

from .errors import ValidationError
from .terms import Term, to_sexpr

MERGED_ADVERSARY = "o"


class PrincipalKind(str, Enum):
    HONEST = "honest"
    ADVERSARY = "adversary"
    PRIMITIVE = "primitive"


@dataclass(frozen=True)
class Principal:
    name: str
    kind: PrincipalKind


@dataclass(frozen=True)
class FixedSet:
    """Values only their owning primitive may hold initially."""
    owner: str
    members: FrozenSet[Term]


class KnowledgeState:
    """Immutable set of (principal-name, ground term) facts."""

    __slots__ = ("facts",)

    def __init__(self, facts: Iterable[Tuple[str, Term]] = ()):
        fs = frozenset(facts)
        for p, v in fs:
            if v.has_vars:
                raise ValidationError("knowledge facts must be ground: (%s, %s)" % (p, v))
        object.__setattr__(self, "facts", fs)

    def __eq__(self, other):
        return isinstance(other, KnowledgeState) and self.facts == other.facts

    def __hash__(self):
        return hash(self.facts)

    def __len__(self):
        return len(self.facts)

    def __contains__(self, fact):
        return fact in self.facts

    def __le__(self, other):
        return self.facts <= other.facts

    def knows(self, principal: str, v: Term) -> bool:
        return (principal, v) in self.facts

    def projection(self, principal: str) -> FrozenSet[Term]:
        return frozenset(v for p, v in self.facts if p == principal)

    def principals(self) -> FrozenSet[str]:
        return frozenset(p for p, _ in self.facts)

    def with_facts(self, more: Iterable[Tuple[str, Term]]) -> "KnowledgeState":
        return KnowledgeState(self.facts | frozenset(more))

    def to_json(self):
        rows = sorted(self.facts, key=lambda fv: (fv[0], fv[1].sort_key()))
        return {"facts": [{"principal": p, "term": to_sexpr(v)} for p, v in rows]}

    def __repr__(self):
        return "KnowledgeState(%d facts)" % len(self.facts)


def source(k0: KnowledgeState, v: Term) -> frozenset:
    """The principals holding v in the initial state."""
    if v.has_vars:
        raise ValidationError("source() takes a ground value")
    return frozenset(p for p, w in k0.facts if w is v)


def knowledge(k: KnowledgeState) -> frozenset:
    """Every value somebody knows, regardless of who."""
    return frozenset(v for _, v in k.facts)


def merge(adversaries, k: KnowledgeState, rules,
          merged_name: str = MERGED_ADVERSARY,
          primitive_names: Iterable[str] = ()):
    """Collapse all adversaries into one principal.

    Facts and rule principal slots are rewritten; rules that become
    self-rules (teller = learner) are dropped, since telling yourself adds
    nothing. Returns (merged state, merged rule tuple).
    """
    adv = set(adversaries)
    if not adv:
        raise ValidationError("merge() needs at least one adversary")
    prim = set(primitive_names)
    clash = adv & prim
    if clash:
        raise ValidationError("cannot merge primitive principals: %s" % sorted(clash))

    def rename(p):
        return merged_name if p in adv else p

    facts = KnowledgeState((rename(p), v) for p, v in k.facts)
    out = []
    for r in rules:
        teller = rename(r.teller)
        learner = rename(r.learner)
        if teller == learner:
            continue
        if teller == r.teller and learner == r.learner:
            out.append(r)
        else:
            out.append(r.with_principals(teller, learner))
    return facts, tuple(out)


def saturate_honest(k0: KnowledgeState, universe, fixed=(),
                    principals: Optional[Iterable[str]] = None) -> KnowledgeState:
    """Give every non-adversary principal all shareable values.

    Models the worst case in which honest principals freely exchange
    everything learnable, except values pinned to a fixed-set owner. The
    adversary's projection is untouched. `principals` defaults to the
    non-adversary principals already mentioned in the state.
    """
    if principals is None:
        names = sorted(k0.principals() - {MERGED_ADVERSARY})
    else:
        names = sorted(set(principals) - {MERGED_ADVERSARY})
    pinned = {}
    for f in fixed:
        for v in f.members:
            pinned.setdefault(v, set()).add(f.owner)
    new = []
    for p in names:
        for v in universe:
            if v in pinned and p not in pinned[v]:
                continue
            new.append((p, v))
    return k0.with_facts(new)
