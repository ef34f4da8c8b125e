"""Communication rules, one-way matching, and instantiation.

Substitutions are plain dicts mapping variable names to terms. `match` binds
pattern variables against a ground term; `unify` is the two-sided variant the
engine's goal-directed search needs (triangular bindings, occurs check).
Unordered set terms make matching multivalued, so the workhorses are the
`*_all` iterators; the single-result forms return the canonically first hit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, Iterator, Optional, Tuple

from .errors import ValidationError
from .knowledge import MERGED_ADVERSARY
from .terms import SET, VAR, Term, free_vars, to_sexpr

Substitution = Dict[str, Term]


@dataclass(frozen=True)
class PatternRule:
    """A communication rule: teller passes the taught value to the learner,
    provided the learner already holds every premise."""
    rule_id: str
    teller: str
    taught: Term
    learner: str
    premises: Tuple[Term, ...]

    def quantified_vars(self) -> frozenset:
        out = set(free_vars(self.taught))
        for p in self.premises:
            out |= free_vars(p)
        return frozenset(out)

    def with_principals(self, teller, learner) -> "PatternRule":
        return replace(self, teller=teller, learner=learner)

    def to_json(self):
        return {
            "id": self.rule_id,
            "teller": self.teller,
            "taught": to_sexpr(self.taught),
            "learner": self.learner,
            "premises": [to_sexpr(p) for p in self.premises],
            "quantifiers": sorted(self.quantified_vars()),
        }


@dataclass(frozen=True)
class ProjectedRule:
    """The adversary-side view: premises he must derive, conclusion he gains."""
    rule_id: str
    premises: Tuple[Term, ...]
    conclusion: Term
    origin: str

    def to_json(self):
        return {
            "id": self.rule_id,
            "premises": [to_sexpr(p) for p in self.premises],
            "conclusion": to_sexpr(self.conclusion),
            "origin": self.origin,
        }


def _frozen(subst: Substitution):
    return frozenset(subst.items())


def match_all(pattern: Term, ground: Term,
              partial: Optional[Substitution] = None) -> Iterator[Substitution]:
    """All extensions of `partial` making the pattern equal the ground term.

    Multiple solutions arise only through unordered set children; results are
    deduplicated and produced in canonical order (aligned before swapped).
    """
    if ground.has_vars:
        raise ValidationError("match target must be ground")

    def go(p, g, subst):
        if p.tag == VAR:
            bound = subst.get(p.name)
            if bound is None:
                ext = dict(subst)
                ext[p.name] = g
                yield ext
            elif bound is g:
                yield subst
            return
        if not p.has_vars:
            if p is g:
                yield subst
            return
        if p.tag != g.tag or p.name != g.name:
            return
        orders = [tuple(range(len(p.children)))]
        if p.tag == SET and g.children[0] is not g.children[1]:
            orders.append((1, 0))

        def walk(order, i, sub):
            if i == len(order):
                yield sub
                return
            for s1 in go(p.children[i], g.children[order[i]], sub):
                yield from walk(order, i + 1, s1)

        for order in orders:
            yield from walk(order, 0, subst)

    seen = set()
    base = dict(partial) if partial else {}
    for s in go(pattern, ground, base):
        key = _frozen(s)
        if key not in seen:
            seen.add(key)
            yield s


def match(pattern: Term, ground: Term,
          partial: Optional[Substitution] = None) -> Optional[Substitution]:
    for s in match_all(pattern, ground, partial):
        return s
    return None


def instantiate(pattern: Term, subst: Substitution) -> Term:
    if not pattern.has_vars:
        return pattern
    if pattern.tag == VAR:
        try:
            return subst[pattern.name]
        except KeyError:
            raise ValidationError("substitution does not cover variable %r" % pattern.name)
    kids = tuple(instantiate(c, subst) for c in pattern.children)
    return pattern.table.intern(pattern.tag, pattern.name, kids)


def walk(t: Term, subst: Substitution) -> Term:
    while t.tag == VAR and t.name in subst:
        t = subst[t.name]
    return t


def _occurs(name, t, subst):
    t = walk(t, subst)
    if t.tag == VAR:
        return t.name == name
    return any(_occurs(name, c, subst) for c in t.children if c.has_vars)


def unify_all(a: Term, b: Term,
              partial: Optional[Substitution] = None) -> Iterator[Substitution]:
    """Two-sided unification with triangular bindings and occurs check."""

    def go(x, y, subst):
        x = walk(x, subst)
        y = walk(y, subst)
        if x is y:
            yield subst
            return
        if x.tag == VAR:
            if _occurs(x.name, y, subst):
                return
            ext = dict(subst)
            ext[x.name] = y
            yield ext
            return
        if y.tag == VAR:
            if _occurs(y.name, x, subst):
                return
            ext = dict(subst)
            ext[y.name] = x
            yield ext
            return
        if x.tag != y.tag or x.name != y.name:
            return
        if not x.children:
            return  # distinct leaves
        orders = [tuple(range(len(x.children)))]
        if x.tag == SET and y.children[0] is not y.children[1]:
            orders.append((1, 0))

        def walk_children(order, i, sub):
            if i == len(order):
                yield sub
                return
            for s1 in go(x.children[i], y.children[order[i]], sub):
                yield from walk_children(order, i + 1, s1)

        for order in orders:
            yield from walk_children(order, 0, subst)

    seen = set()
    for s in go(a, b, dict(partial) if partial else {}):
        key = _frozen(s)
        if key not in seen:
            seen.add(key)
            yield s


def resolve(t: Term, subst: Substitution) -> Term:
    """Apply a (possibly triangular) substitution as deeply as it goes;
    unresolved variables stay in place."""
    t = walk(t, subst)
    if not t.has_vars or t.tag == VAR:
        return t
    kids = tuple(resolve(c, subst) for c in t.children)
    return t.table.intern(t.tag, t.name, kids)


def project(rule: PatternRule, oscar: str = MERGED_ADVERSARY) -> Optional[ProjectedRule]:
    """Adversary's view of a rule, or None when he is not the learner."""
    if rule.learner != oscar:
        return None
    return ProjectedRule(rule.rule_id, rule.premises, rule.taught, rule.teller)


def _solutions(patterns, universe, base=None):
    """All substitutions placing every pattern instance inside the universe."""
    sols = [dict(base) if base else {}]
    for pat in patterns:
        nxt = []
        for s in sols:
            for t in universe:
                for s2 in match_all(pat, t, s):
                    nxt.append(s2)
        # dedup, keeping first (canonical) occurrence
        seen, uniq = set(), []
        for s in nxt:
            key = _frozen(s)
            if key not in seen:
                seen.add(key)
                uniq.append(s)
        sols = uniq
        if not sols:
            break
    return sols


def pattern_rule_instances(rule: PatternRule, universe) -> Tuple[PatternRule, ...]:
    """Ground instances of a rule with every mentioned term in the universe."""
    out = []
    for s in _solutions((rule.taught,) + rule.premises, universe):
        out.append(replace(
            rule,
            taught=instantiate(rule.taught, s),
            premises=tuple(instantiate(p, s) for p in rule.premises)))
    return tuple(dict.fromkeys(out))


def projected_rule_instances(rule: ProjectedRule, universe) -> Tuple[ProjectedRule, ...]:
    out = []
    for s in _solutions((rule.conclusion,) + rule.premises, universe):
        out.append(replace(
            rule,
            conclusion=instantiate(rule.conclusion, s),
            premises=tuple(instantiate(p, s) for p in rule.premises)))
    return tuple(dict.fromkeys(out))


def restrict_RF(rules, fixed, universe) -> Tuple[ProjectedRule, ...]:
    """Drop ground projected-rule instances that would move a fixed-set value
    through anyone but its owner. With no fixed sets this is the identity
    (up to grounding quantified rules against the universe).
    """
    ground = []
    for r in rules:
        if r.conclusion.has_vars or any(p.has_vars for p in r.premises):
            ground.extend(projected_rule_instances(r, universe))
        else:
            ground.append(r)
    rules = ground
    fixed = tuple(fixed)
    if not fixed:
        return tuple(rules)
    owner_of = {}
    for f in fixed:
        for v in f.members:
            owner_of.setdefault(v, set()).add(f.owner)

    def blocked(rule):
        owners = owner_of.get(rule.conclusion)
        if owners is not None and rule.origin not in owners:
            return True
        for p in rule.premises:
            # premises are held by the (non-owner) learner
            if p in owner_of:
                return True
        return False

    return tuple(r for r in rules if not blocked(r))
