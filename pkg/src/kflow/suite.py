"""Randomized cross-validation suites.

Three generators, all seeded and deterministic:

- small random protocols, checked target-by-target: the two-phase engine's
  verdict must agree exactly with membership in the naive saturation;
- full-state stepping instances: the adversary's projection of the
  whole-system step operator must equal the projected-rule step at every
  iteration, under the honest-omniscience precondition;
- multi-adversary instances: collapsing the adversaries before saturating
  must overapproximate collapsing afterwards.

Instances whose naive saturation overflows its cap are resampled with the
next attempt number, so one seed always yields the same case list.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence, Tuple

from .engine import Bounds, RuleFamily, derivable, f_step, g_step, saturate_naive
from .errors import ResourceError
from .knowledge import (
    MERGED_ADVERSARY,
    KnowledgeState,
    Principal,
    PrincipalKind,
    merge,
    saturate_honest,
)
from .rules import PatternRule, project
from .terms import (
    DEFAULT_TABLE,
    Term,
    TermTable,
    enumerate_universe,
    free_vars,
    to_sexpr,
)
from .dsl import ProtocolSpec

# naive saturation must close under this size for a case to be admitted.
# Two ceilings matter: the engine's wave-candidate cap (admitted cases must
# sit below it so no instantiation candidates are ever truncated) and the
# quadratic join cost of rule instantiation over the saturated set, which
# makes caps in the thousands take minutes per case.
ORACLE_CAP = 400
_ATTEMPTS = 40

_PRIM_TAGS = {
    "enc": ("pk", "enc", "sig"),
    "hash": ("hash",),
    "nonce": ("nonce",),
    "pair": ("pair",),
    "set": ("set",),
    "rule": ("rule-val",),
}


@dataclass(frozen=True)
class SuiteCase:
    """One generated protocol with its ground-truth saturation."""
    name: str
    spec: ProtocolSpec
    bounds: Bounds
    oracle: FrozenSet[Term]
    targets: Tuple[Term, ...]


@dataclass(frozen=True)
class Mismatch:
    case: str
    target: Term
    in_oracle: bool
    status: str

    def to_json(self):
        return {"case": self.case, "target": to_sexpr(self.target),
                "in_oracle": self.in_oracle, "engine_status": self.status}


@dataclass
class SuiteReport:
    seed: int
    cases: int = 0
    targets_checked: int = 0
    resamples: int = 0
    mismatches: List[Mismatch] = field(default_factory=list)
    pruning_checked: int = 0
    pruning_violations: List[dict] = field(default_factory=list)

    @property
    def matched(self) -> bool:
        return not self.mismatches and not self.pruning_violations

    def to_json(self):
        return {
            "seed": self.seed,
            "cases": self.cases,
            "targets_checked": self.targets_checked,
            "resamples": self.resamples,
            "matched": self.matched,
            "mismatches": [m.to_json() for m in self.mismatches],
            "pruning_checked": self.pruning_checked,
            "pruning_violations": list(self.pruning_violations),
        }


# -- random protocol generation ----------------------------------------


def _random_pattern(rng: random.Random, table: TermTable, leaves, ctors,
                    vars_ok: Sequence[str], depth: int) -> Term:
    choices = []
    if depth > 0 and ctors:
        choices += ["node"] * 5
    choices += ["leaf"] * 3
    if vars_ok:
        choices += ["var"] * 3
    kind = rng.choice(choices)
    if kind == "var":
        return table.var(rng.choice(list(vars_ok)))
    if kind == "leaf" or not ctors:
        return table.intern(*rng.choice(leaves))
    tag = rng.choice(list(ctors))
    if tag in ("pk", "hash"):
        return table.intern(tag, children=(
            _random_pattern(rng, table, leaves, ctors, vars_ok, depth - 1),))
    if tag == "nonce":
        seed = _random_pattern(rng, table, leaves, ctors, vars_ok, depth - 1)
        ident = table.ident(rng.choice(("a", "o")))
        return table.nonce(seed, ident)
    kids = tuple(
        _random_pattern(rng, table, leaves, ctors, vars_ok, depth - 1)
        for _ in range(2))
    return table.intern(tag, children=kids)


def _random_family(rng, table, leaves, ctors, fam_id: str) -> RuleFamily:
    n_prem = rng.choices((0, 1, 2), weights=(15, 55, 30))[0]
    vars_ok = ("v", "w") if n_prem else ()
    premises = []
    bare_seen = False
    for _ in range(n_prem):
        p = _random_pattern(rng, table, leaves, ctors, vars_ok, 2)
        # a second unconstrained variable premise would make every pair of
        # derivable values an instance; keep instantiation near-linear
        while p.tag == "var" and bare_seen:
            p = _random_pattern(rng, table, leaves, ctors, vars_ok, 2)
        bare_seen = bare_seen or p.tag == "var"
        premises.append(p)
    premises = tuple(premises)
    bound = set()
    for p in premises:
        bound |= free_vars(p)
    conclusion = _random_pattern(rng, table, leaves, ctors, sorted(bound), 2)
    return RuleFamily(fam_id, premises, conclusion)


def _random_spec(rng: random.Random, table: TermTable, name: str
                 ) -> Tuple[ProtocolSpec, int]:
    deep = rng.random() < 0.3
    if deep:
        depth = 3
        atoms = ["m1"]
        primitives = sorted(rng.sample(("hash", "nonce", "pair"),
                                       rng.randint(1, 3)))
    else:
        depth = 2
        atoms = ["m1", "m2"][:rng.randint(1, 2)]
        pool = ("enc", "hash", "nonce", "pair", "set", "rule")
        primitives = sorted(rng.sample(pool, rng.randint(2, 3)))

    ctors = []
    for p in primitives:
        ctors.extend(_PRIM_TAGS[p])
    leaves = [("atom", a) for a in atoms] + [("eps", None)]

    families = []
    for i in range(rng.randint(1, 4)):
        fam = _random_family(rng, table, leaves, ctors, "f%d" % (i + 1))
        if deep:
            # ground families pull in the rule-value carrier, whose binary
            # constructor makes depth-3 closures hopeless; redraw instead
            while fam.is_ground():
                fam = _random_family(rng, table, leaves, ctors, "f%d" % (i + 1))
        families.append(fam)

    # ground families ride as rule-values and need their carrier primitives
    for fam in families:
        if fam.is_ground():
            if "rule" not in primitives:
                primitives = sorted(primitives + ["rule"])
            if len(fam.premises) > 1 and "pair" not in primitives:
                primitives = sorted(primitives + ["pair"])

    facts = [("o", table.atom(a)) for a in atoms if rng.random() < 0.75]
    spec = ProtocolSpec(
        name=name,
        principals=(Principal("a", PrincipalKind.HONEST),
                    Principal("o", PrincipalKind.ADVERSARY)),
        atoms=tuple(atoms),
        keypairs=(),
        initial_facts=tuple(facts),
        families=tuple(families),
        primitives=tuple(primitives),
        queries=(),
        table=table)
    return spec, depth


def _sample_targets(rng, table, spec: ProtocolSpec, oracle, depth: int
                    ) -> Tuple[Term, ...]:
    members = sorted(oracle)
    picks = rng.sample(members, min(4, len(members)))
    ctors = []
    for p in spec.primitives:
        ctors.extend(_PRIM_TAGS[p])
    leaf_terms = [table.atom(a) for a in spec.atoms] + [table.eps()]
    try:
        universe = enumerate_universe(leaf_terms, ctors, depth, cap=20000)
        outside = [t for t in universe if t not in oracle]
        picks += rng.sample(outside, min(3, len(outside)))
    except ResourceError:
        pass
    # one target past the depth bound: never derivable, never a member
    deepest = members[-1]
    beyond = table.pair(deepest, deepest) if "pair" in spec.primitives \
        else table.hashed(deepest) if "hash" in spec.primitives else None
    if beyond is not None and beyond not in oracle:
        picks.append(beyond)
    return tuple(dict.fromkeys(picks))


def generate_cases(seed: int, count: int,
                   table: Optional[TermTable] = None) -> Tuple[List[SuiteCase], int]:
    """Deterministic case list plus the number of oversized instances that
    had to be resampled along the way."""
    table = table or DEFAULT_TABLE
    cases = []
    resamples = 0
    for i in range(count):
        for attempt in range(_ATTEMPTS):
            rng = random.Random("%d:%d:%d" % (seed, i, attempt))
            name = "case-%d-%d" % (i, attempt)
            spec, depth = _random_spec(rng, table, name)
            proto = spec.compile()
            bounds = Bounds(max_term_depth=depth, max_rounds=64,
                            max_synthesis_depth=24)
            try:
                oracle = saturate_naive(proto.initial, proto.oracle_rules(),
                                        bounds, ORACLE_CAP)
            except ResourceError:
                resamples += 1
                continue
            targets = _sample_targets(rng, table, spec, oracle, depth)
            cases.append(SuiteCase(name, spec, bounds, oracle, targets))
            break
        else:
            raise ResourceError(
                "could not draw a cap-respecting protocol for slot %d" % i)
    return cases, resamples


# -- engine-vs-saturation comparison -----------------------------------


def check_case(case: SuiteCase, drop_rules=(), instrument: bool = False,
               report: Optional[SuiteReport] = None) -> List[Mismatch]:
    out = []
    proto = case.spec.compile()
    for target in case.targets:
        verdict = derivable(target, proto, case.bounds,
                            instrument=instrument, drop_rules=drop_rules)
        expected = target in case.oracle
        if verdict.attack_found != expected:
            out.append(Mismatch(case.name, target, expected, verdict.status))
        if report is not None:
            report.targets_checked += 1
            if instrument and verdict.pruning is not None:
                report.pruning_checked += verdict.pruning["decompositions_checked"]
                report.pruning_violations.extend(verdict.pruning["violations"])
    return out


def run_suite(seed: int, count: int, drop_rules=(), instrument: bool = False,
              table: Optional[TermTable] = None) -> SuiteReport:
    report = SuiteReport(seed=seed)
    cases, report.resamples = generate_cases(seed, count, table)
    report.cases = len(cases)
    for case in cases:
        report.mismatches.extend(
            check_case(case, drop_rules=drop_rules, instrument=instrument,
                       report=report))
    return report


# -- full-state stepping vs projected stepping -------------------------


@dataclass(frozen=True)
class SteppingCase:
    name: str
    universe: Tuple[Term, ...]
    rules: Tuple[PatternRule, ...]
    start: KnowledgeState


def _random_step_rule(rng, table, leaves, rid: str) -> PatternRule:
    # adversary-learning rules dominate so the projected side has work to do
    if rng.random() < 0.7:
        teller, learner = rng.choice(("a", "b")), MERGED_ADVERSARY
    else:
        teller = rng.choice(("a", "b", MERGED_ADVERSARY))
        learner = rng.choice([p for p in ("a", "b") if p != teller])
    vars_ok = ("v", "w")
    taught = _random_pattern(rng, table, leaves, ("pair", "hash"), vars_ok, 1)
    premises = tuple(
        _random_pattern(rng, table, leaves, ("pair", "hash"), vars_ok, 1)
        for _ in range(rng.randint(1, 2)))
    return PatternRule(rid, teller, taught, learner, premises)


def generate_stepping_cases(seed: int, count: int,
                            table: Optional[TermTable] = None
                            ) -> List[SteppingCase]:
    table = table or DEFAULT_TABLE
    out = []
    for i in range(count):
        rng = random.Random("step:%d:%d" % (seed, i))
        atoms = [table.atom(a) for a in ("x", "y")[:rng.randint(1, 2)]]
        atoms.append(table.eps())
        universe = enumerate_universe(atoms, ("pair", "hash"), 1, cap=2000)
        leaves = [(t.tag, t.name) for t in atoms]
        rules = [_random_step_rule(rng, table, leaves, "r%d" % j)
                 for j in range(rng.randint(3, 6))]
        # a guaranteed two-stage relay: the second rule's premise is only
        # satisfied by the first rule's output, so growth takes several steps
        v = table.var("v")
        rules.append(PatternRule("relay-1", "a", table.hashed(v),
                                 MERGED_ADVERSARY, (v,)))
        rules.append(PatternRule("relay-2", "b", table.pair(v, atoms[0]),
                                 MERGED_ADVERSARY, (table.hashed(v),)))
        rules = tuple(rules)
        oscar = [(MERGED_ADVERSARY, t) for t in universe
                 if rng.random() < 0.12]
        oscar.append((MERGED_ADVERSARY, atoms[0]))
        base = KnowledgeState(oscar)
        # honest principals start maximal: every universe value
        start = saturate_honest(base, universe, principals=("a", "b"))
        out.append(SteppingCase("step-%d-%d" % (seed, i),
                                tuple(universe), rules, start))
    return out


def check_stepping_case(case: SteppingCase) -> dict:
    """Iterate the full-state step and the projected step side by side;
    the adversary's view must agree at every stage through the fixpoint."""
    projected = tuple(p for p in (project(r) for r in case.rules)
                      if p is not None)
    k = case.start
    X = k.projection(MERGED_ADVERSARY)
    steps = 0
    while True:
        k2 = f_step(k, case.rules, case.universe)
        X2 = g_step(X, projected, case.universe)
        steps += 1
        if k2.projection(MERGED_ADVERSARY) != X2:
            return {"case": case.name, "agreed": False, "steps": steps}
        if k2 == k and X2 == X:
            return {"case": case.name, "agreed": True, "steps": steps}
        k, X = k2, X2


# -- adversary collapsing ----------------------------------------------


@dataclass(frozen=True)
class CollapseCase:
    name: str
    universe: Tuple[Term, ...]
    rules: Tuple[PatternRule, ...]
    start: KnowledgeState
    adversaries: Tuple[str, ...]


def saturate_state(k: KnowledgeState, rules, universe) -> KnowledgeState:
    while True:
        k2 = f_step(k, rules, universe)
        if k2 == k:
            return k
        k = k2


def generate_collapse_cases(seed: int, count: int,
                            table: Optional[TermTable] = None
                            ) -> List[CollapseCase]:
    table = table or DEFAULT_TABLE
    out = []
    principals = ("h", "o1", "o2")
    for i in range(count):
        rng = random.Random("collapse:%d:%d" % (seed, i))
        atoms = [table.atom(a) for a in ("x", "y", "z")[:rng.randint(2, 3)]]
        universe = enumerate_universe(atoms, ("pair",), 1, cap=2000)
        leaves = [(t.tag, t.name) for t in atoms]
        rules = []
        for j in range(rng.randint(2, 6)):
            teller = rng.choice(principals)
            learner = rng.choice([p for p in principals if p != teller])
            taught = _random_pattern(rng, table, leaves, ("pair",), ("v",), 1)
            premises = tuple(
                _random_pattern(rng, table, leaves, ("pair",), ("v",), 1)
                for _ in range(rng.randint(0, 2)))
            rules.append(PatternRule("r%d" % j, teller, taught, learner,
                                     premises))
        facts = [(p, t) for p in principals for t in universe
                 if rng.random() < 0.25]
        out.append(CollapseCase("collapse-%d-%d" % (seed, i),
                                tuple(universe), tuple(rules),
                                KnowledgeState(facts), ("o1", "o2")))
    return out


def strictness_fixture(table: Optional[TermTable] = None) -> CollapseCase:
    """Premises split across two adversaries: apart they cannot trigger the
    teaching rule, together they can, so inclusion is strict."""
    table = table or DEFAULT_TABLE
    x, y, s = table.atom("x"), table.atom("y"), table.atom("s")
    universe = (x, y, s)
    rules = (PatternRule("tell-s", "h", s, "o2", (x, y)),)
    start = KnowledgeState([("h", s), ("o1", x), ("o2", y)])
    return CollapseCase("collapse-strict", universe, rules, start,
                        ("o1", "o2"))


def check_collapse_case(case: CollapseCase) -> dict:
    """Saturate, then collapse, against collapse, then saturate."""
    full = saturate_state(case.start, case.rules, case.universe)
    collapsed_after, _ = merge(case.adversaries, full, ())
    k0, rules = merge(case.adversaries, case.start, case.rules)
    collapsed_before = saturate_state(k0, rules, case.universe)
    subset = collapsed_after.facts <= collapsed_before.facts
    strict = subset and collapsed_after.facts != collapsed_before.facts
    return {"case": case.name, "subset": subset, "strict": strict}
