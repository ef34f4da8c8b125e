"""Primitive operation specs and their structural checks.

Each cryptographic primitive is described by a tuple relation: a schema of
pattern terms over shared variables, composing positions (the primitive will
build that component for anyone holding the premise components), decomposing
positions (it will extract the component from a controlling compound), and a
premise-index map. The checks here validate the two collision-freeness
conditions, derive the composing/decomposing classification with controlling
positions, and compute constructibility strata and fixed sets over a finite
universe.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from .errors import ValidationError
from .knowledge import MERGED_ADVERSARY, FixedSet
from .terms import (
    DEFAULT_TABLE,
    VAR,
    Term,
    TermTable,
    free_vars,
    to_sexpr,
)
from .rules import _solutions, instantiate, match, match_all


@dataclass(frozen=True)
class PrimitiveSpec:
    """Tuple-relation description of one primitive, with 1-based positions."""
    name: str
    principal: str
    arity: int
    schema: Tuple[Term, ...]
    composing: FrozenSet[int]
    decomposing: FrozenSet[int]
    premises: Mapping[int, FrozenSet[int]]
    rule_names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.arity < 1 or len(self.schema) != self.arity:
            raise ValidationError(
                "spec %r: schema length %d does not match arity %d"
                % (self.name, len(self.schema), self.arity))
        positions = range(1, self.arity + 1)
        for i in self.composing | self.decomposing:
            if i not in positions:
                raise ValidationError("spec %r: position %d out of range" % (self.name, i))
        overlap = self.composing & self.decomposing
        if overlap:
            raise ValidationError(
                "spec %r: positions %s both composing and decomposing"
                % (self.name, sorted(overlap)))
        if set(self.premises) != set(self.composing | self.decomposing):
            raise ValidationError(
                "spec %r: premise map must cover exactly the composing and "
                "decomposing positions" % self.name)
        for i, w in self.premises.items():
            for j in w:
                if j not in positions:
                    raise ValidationError(
                        "spec %r: premise index %d out of range" % (self.name, j))
            if i in w:
                raise ValidationError(
                    "spec %r: position %d lists itself as a premise" % (self.name, i))

    def pattern(self, position: int) -> Term:
        return self.schema[position - 1]

    def premise_patterns(self, position: int) -> Tuple[Term, ...]:
        return tuple(self.schema[j - 1] for j in sorted(self.premises[position]))

    def to_json(self):
        return {
            "name": self.name,
            "principal": self.principal,
            "arity": self.arity,
            "schema": [to_sexpr(t) for t in self.schema],
            "composing": sorted(self.composing),
            "decomposing": sorted(self.decomposing),
            "premises": {str(i): sorted(w) for i, w in sorted(self.premises.items())},
        }


@dataclass(frozen=True)
class PrimitiveRule:
    """One position of a spec, projected to the adversary's side.

    Composing rules have controlling None. For a decomposing rule,
    `controlling` indexes the premise whose concrete value drives the step;
    the remaining premises are side conditions.
    """
    rule_id: str
    premises: Tuple[Term, ...]
    conclusion: Term
    origin: str
    controlling: Optional[int]

    @property
    def is_decomposing(self) -> bool:
        return self.controlling is not None

    def to_json(self):
        return {
            "id": self.rule_id,
            "premises": [to_sexpr(p) for p in self.premises],
            "conclusion": to_sexpr(self.conclusion),
            "origin": self.origin,
            "controlling": self.controlling,
        }


def controller(spec: PrimitiveSpec, position: int) -> Optional[int]:
    """Smallest composing position that controls a decomposing one: it must be
    a premise of the decomposition, and the decomposed position must be one of
    its own premises."""
    for h in sorted(spec.composing):
        if h in spec.premises[position] and position in spec.premises[h]:
            return h
    return None


def _rule_name(spec, position, kind):
    name = spec.rule_names.get(position)
    if name:
        return name
    return "%s-%s%d" % (spec.name, kind, position)


def spec_rules(spec: PrimitiveSpec) -> Tuple[PrimitiveRule, ...]:
    out = []
    for i in sorted(spec.composing):
        out.append(PrimitiveRule(
            rule_id=_rule_name(spec, i, "c"),
            premises=spec.premise_patterns(i),
            conclusion=spec.pattern(i),
            origin=spec.principal,
            controlling=None))
    for i in sorted(spec.decomposing):
        h = controller(spec, i)
        if h is None:
            raise ValidationError(
                "spec %r: decomposing position %d has no controlling position"
                % (spec.name, i))
        ordered = sorted(spec.premises[i])
        out.append(PrimitiveRule(
            rule_id=_rule_name(spec, i, "d"),
            premises=spec.premise_patterns(i),
            conclusion=spec.pattern(i),
            origin=spec.principal,
            controlling=ordered.index(h)))
    return tuple(out)


def builtin_specs(table: TermTable = DEFAULT_TABLE) -> Tuple[PrimitiveSpec, ...]:
    """The stock primitives: asymmetric encryption with signatures, hashing,
    adversary nonces, pairing, the rule primitive, and two-element sets."""
    s = table.var("s")
    x = table.var("x")
    y = table.var("y")
    v = table.var("v")
    enc = PrimitiveSpec(
        name="enc", principal="enc", arity=5,
        schema=(s, table.pk(s), x, table.enc(table.pk(s), x), table.sig(s, x)),
        composing=frozenset({2, 4, 5}),
        decomposing=frozenset({3}),
        premises={2: frozenset({1}), 3: frozenset({1, 4}),
                  4: frozenset({2, 3}), 5: frozenset({1, 3})},
        rule_names={2: "keygen", 3: "decrypt", 4: "encrypt", 5: "sign"})
    hash_spec = PrimitiveSpec(
        name="hash", principal="hash", arity=2,
        schema=(x, table.hashed(x)),
        composing=frozenset({2}), decomposing=frozenset(),
        premises={2: frozenset({1})},
        rule_names={2: "hash"})
    # the adversary can only seed nonces with his own identity
    nonce = PrimitiveSpec(
        name="nonce", principal="nonce", arity=2,
        schema=(v, table.nonce(v, table.ident(MERGED_ADVERSARY))),
        composing=frozenset({2}), decomposing=frozenset(),
        premises={2: frozenset({1})},
        rule_names={2: "nonce"})
    pair = PrimitiveSpec(
        name="pair", principal="pair", arity=3,
        schema=(x, y, table.pair(x, y)),
        composing=frozenset({3}), decomposing=frozenset({1, 2}),
        premises={3: frozenset({1, 2}), 1: frozenset({3}), 2: frozenset({3})},
        rule_names={3: "pair", 1: "unpair-first", 2: "unpair-second"})
    rule = PrimitiveSpec(
        name="rule", principal="rule", arity=3,
        schema=(x, y, table.rule_val(x, y)),
        composing=frozenset({3}), decomposing=frozenset({2}),
        premises={3: frozenset({1, 2}), 2: frozenset({1, 3})},
        rule_names={3: "rule-compose", 2: "rule-apply"})
    set2 = PrimitiveSpec(
        name="set", principal="set", arity=3,
        schema=(x, y, table.set2(x, y)),
        composing=frozenset({3}), decomposing=frozenset({1, 2}),
        premises={3: frozenset({1, 2}), 1: frozenset({3}), 2: frozenset({3})},
        rule_names={3: "set", 1: "unset-first", 2: "unset-second"})
    return (enc, hash_spec, nonce, pair, rule, set2)


def builtin_spec_map(table: TermTable = DEFAULT_TABLE) -> Dict[str, PrimitiveSpec]:
    return {s.name: s for s in builtin_specs(table)}


def check_local_cf(spec: PrimitiveSpec, sample_universe) -> "CheckReport":
    """Local collision-freeness.

    Condition one is structural: every decomposing position needs a composing
    controller. Condition two is checked exhaustively over all schema
    instantiations drawable from the sample universe: two tuples agreeing at
    composing positions must agree on the premise values there too.
    """
    violations: List[dict] = []
    for i in sorted(spec.decomposing):
        if controller(spec, i) is None:
            violations.append({
                "condition": "s1",
                "position": i,
                "message": "decomposing position %d has no composing position h "
                           "with h among its premises and %d among h's" % (i, i),
            })

    universe = sorted(sample_universe)
    var_names = sorted({v for p in spec.schema for v in free_vars(p)})
    by_value = {}
    for combo in itertools.product(universe, repeat=len(var_names)):
        subst = dict(zip(var_names, combo))
        for i in sorted(spec.composing):
            value = instantiate(spec.pattern(i), subst)
            premise_vals = frozenset(
                instantiate(spec.schema[j - 1], subst) for j in spec.premises[i])
            by_value.setdefault(value, []).append((i, premise_vals))
    for value, entries in sorted(by_value.items()):
        first_i, first_prem = entries[0]
        for other_i, other_prem in entries[1:]:
            if other_prem != first_prem:
                violations.append({
                    "condition": "s2",
                    "positions": [first_i, other_i],
                    "value": to_sexpr(value),
                    "message": "positions %d and %d produce %s with different "
                               "premise sets" % (first_i, other_i, to_sexpr(value)),
                })
                break
        if any(v["condition"] == "s2" for v in violations):
            break

    return CheckReport(name=spec.name, passed=not violations,
                       violations=tuple(violations))


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    violations: Tuple[dict, ...]

    def to_json(self):
        return {"name": self.name, "pass": self.passed,
                "violations": list(self.violations)}


@dataclass(frozen=True)
class Classification:
    kind: str  # "composing" | "decomposing"
    controlling: Optional[int]


def classify(spec: PrimitiveSpec) -> Dict[int, Classification]:
    out = {}
    for i in sorted(spec.composing):
        out[i] = Classification("composing", None)
    for i in sorted(spec.decomposing):
        h = controller(spec, i)
        if h is None:
            raise ValidationError(
                "spec %r: decomposing position %d has no controller" % (spec.name, i))
        out[i] = Classification("decomposing", h)
    return out


def _image_positions(specs):
    for spec in specs:
        for i in sorted(spec.composing):
            yield spec, i, spec.pattern(i)


def in_image(term: Term, specs) -> bool:
    """Whether the term can occur at a composing position of any spec."""
    for _, _, pat in _image_positions(specs):
        if match(pat, term) is not None:
            return True
    return False


@dataclass(frozen=True)
class StrataMap:
    """Least constructibility stratum per universe term; terms no chain of
    composing steps ever reaches are excluded (they sit outside S-infinity)."""
    levels: Mapping[Term, int]
    excluded: FrozenSet[Term]

    def level(self, t: Term) -> Optional[int]:
        return self.levels.get(t)

    def to_json(self):
        return {
            "levels": [[to_sexpr(t), n] for t, n in sorted(self.levels.items())],
            "excluded": [to_sexpr(t) for t in sorted(self.excluded)],
        }


def strata(universe, specs) -> StrataMap:
    universe = sorted(universe)
    positions = list(_image_positions(specs))
    levels: Dict[Term, int] = {}
    pending = []
    for t in universe:
        if any(match(pat, t) is not None for _, _, pat in positions):
            pending.append(t)
        else:
            levels[t] = 0

    level = 0
    while pending:
        level += 1
        reached = sorted(t for t in levels)
        added = []
        for t in pending:
            hit = False
            for spec, i, pat in positions:
                for subst in match_all(pat, t):
                    prem = spec.premise_patterns(i)
                    if _solutions(prem, reached, base=subst):
                        hit = True
                        break
                if hit:
                    break
            if hit:
                added.append(t)
        if not added:
            break
        for t in added:
            levels[t] = level
        pending = [t for t in pending if t not in levels]

    return StrataMap(levels=levels, excluded=frozenset(pending))


def fixed_set(universe, spec: PrimitiveSpec):
    """Values in the spec's image that no composing chain over the universe
    reaches. Free term algebras give the empty set; anything else signals a
    modeling error (an alleged output with no constructor witness)."""
    sm = strata(universe, [spec])
    members = frozenset(t for t in sm.excluded if in_image(t, [spec]))
    return FixedSet(owner=spec.principal, members=members)


def check_global_cf(specs) -> CheckReport:
    """Composing images across all specs must be pairwise disjoint, realized
    by distinct constructor heads at every composing position."""
    violations = []
    seen = {}
    for spec, i, pat in _image_positions(specs):
        if pat.tag == VAR:
            violations.append({
                "condition": "global",
                "message": "spec %r position %d composes a bare variable, its "
                           "image overlaps everything" % (spec.name, i),
            })
            continue
        key = (pat.tag, pat.name)
        prev = seen.get(key)
        if prev is not None and prev[0] is not spec:
            violations.append({
                "condition": "global",
                "message": "specs %r and %r both compose %s heads"
                           % (prev[0].name, spec.name, pat.tag),
            })
        else:
            seen[key] = (spec, i)
    return CheckReport(name="global", passed=not violations,
                       violations=tuple(violations))


def _ground_rule_instances(rule: PrimitiveRule, universe):
    for s in _solutions((rule.conclusion,) + rule.premises, universe):
        yield (instantiate(rule.conclusion, s),
               tuple(instantiate(p, s) for p in rule.premises))


def check_strata_agreement(universe, specs) -> dict:
    """Composing instances must draw every premise from a strictly lower
    stratum than the conclusion; decomposing instances must not."""
    sm = strata(universe, specs)

    def lvl(t):
        n = sm.level(t)
        return n if n is not None else float("inf")

    checked = 0
    violations = []
    for spec in specs:
        for rule in spec_rules(spec):
            for conclusion, prems in _ground_rule_instances(rule, universe):
                checked += 1
                strictly_lower = all(lvl(p) < lvl(conclusion) for p in prems)
                if rule.is_decomposing == strictly_lower:
                    violations.append({
                        "rule": rule.rule_id,
                        "conclusion": to_sexpr(conclusion),
                        "premises": [to_sexpr(p) for p in prems],
                        "message": "classification disagrees with strata",
                    })
    return {"checked": checked, "violations": violations}


def check_compose_decompose(universe, specs) -> dict:
    """Decomposing a freshly composed value must only return one of the
    composition's own premises."""
    composed = {}
    comp_rules = []
    decomp_rules = []
    for spec in specs:
        for rule in spec_rules(spec):
            (decomp_rules if rule.is_decomposing else comp_rules).append(rule)
    for rule in comp_rules:
        for conclusion, prems in _ground_rule_instances(rule, universe):
            composed.setdefault(conclusion, []).append(frozenset(prems))
    checked = 0
    violations = []
    for rule in decomp_rules:
        for conclusion, prems in _ground_rule_instances(rule, universe):
            controlling = prems[rule.controlling]
            for premise_set in composed.get(controlling, ()):
                checked += 1
                if conclusion not in premise_set:
                    violations.append({
                        "rule": rule.rule_id,
                        "controlling": to_sexpr(controlling),
                        "extracted": to_sexpr(conclusion),
                        "message": "decomposition escaped the composing premises",
                    })
    return {"checked": checked, "violations": violations}
