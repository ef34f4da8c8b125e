"""Derivation engines for the merged adversary.

Two engines share one rule vocabulary. `saturate_naive` is the oracle: apply
every projected rule to a growing ground set until fixpoint, depth-capped.
The two-phase engine (`derivable`) runs a decomposition closure over the
adversary's knowledge, fires protocol rule families in rounds with their
trigger premises discharged by goal-directed synthesis, and finally
synthesizes the query target. Decomposition only ever looks at analyzed
values; collision-freeness of the primitives is what makes that complete.

Proofs are trees of steps replayable without trusting the search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from .errors import ResourceError, ValidationError
from .knowledge import KnowledgeState
from .primitives import PrimitiveRule
from .rules import (
    Substitution,
    instantiate,
    match_all,
    pattern_rule_instances,
    projected_rule_instances,
    resolve,
    unify_all,
)
from .terms import (
    ATOM,
    DEFAULT_UNIVERSE_CAP,
    IDENT,
    SET,
    VAR,
    Term,
    TermTable,
    free_vars,
    to_sexpr,
)

# Size limit on the per-wave pool of instantiation candidates (the
# buildable-term closure of the analyzed set). Small enough that protocols
# whose saturation is itself enumerable stay exact, and message-scale runs
# overflow it immediately instead of wasting time.
WAVE_CANDIDATE_CAP = 4096


@dataclass(frozen=True)
class Bounds:
    max_term_depth: int = 6
    max_rounds: int = 4
    max_synthesis_depth: int = 8

    def __post_init__(self):
        if min(self.max_term_depth, self.max_rounds, self.max_synthesis_depth) < 0:
            raise ValidationError("bounds must be nonnegative")

    def to_json(self):
        return {"depth": self.max_term_depth, "rounds": self.max_rounds,
                "synth_depth": self.max_synthesis_depth}


@dataclass(frozen=True)
class RuleFamily:
    """A protocol step from the adversary's side: supply the premise
    messages, receive the conclusion message."""
    family_id: str
    premises: Tuple[Term, ...]
    conclusion: Term

    @property
    def rule_id(self) -> str:
        return self.family_id

    def variables(self) -> frozenset:
        out = set(free_vars(self.conclusion))
        for p in self.premises:
            out |= free_vars(p)
        return frozenset(out)

    def is_ground(self) -> bool:
        return not self.variables()

    def to_json(self):
        return {"id": self.family_id,
                "premises": [to_sexpr(p) for p in self.premises],
                "conclusion": to_sexpr(self.conclusion)}


@dataclass(frozen=True)
class CompiledProtocol:
    name: str
    table: TermTable
    initial: Tuple[Term, ...]
    families: Tuple[RuleFamily, ...]
    ground_values: Mapping[Term, str]  # rule-value term in X0 -> family id
    composing: Tuple[PrimitiveRule, ...]
    decomposing: Tuple[PrimitiveRule, ...]
    known_atoms: FrozenSet[Term]
    queries: Mapping[str, Term] = field(default_factory=dict)

    def rule(self, rule_id: str):
        for r in self.composing:
            if r.rule_id == rule_id:
                return r
        for r in self.decomposing:
            if r.rule_id == rule_id:
                return r
        for f in self.families:
            if f.family_id == rule_id:
                return f
        return None

    def quantified_families(self) -> Tuple[RuleFamily, ...]:
        return tuple(f for f in self.families if not f.is_ground())

    def oracle_rules(self):
        """Uniform rule list for the naive engine: primitive rules plus the
        quantified families. Ground families ride along as rule-values in the
        initial knowledge and fire through rule application."""
        rules = list(self.composing) + list(self.decomposing)
        rules += list(self.quantified_families())
        return tuple(sorted(rules, key=lambda r: r.rule_id))


@dataclass(frozen=True)
class ProofStep:
    kind: str  # initial | compose | decompose | protocol-rule
    rule_id: Optional[str]
    substitution: Mapping[str, Term]
    premises: Tuple["ProofStep", ...]
    conclusion: Term

    def to_json(self):
        return {
            "kind": self.kind,
            "rule": self.rule_id,
            "substitution": {k: to_sexpr(v)
                             for k, v in sorted(self.substitution.items())},
            "premises": [p.to_json() for p in self.premises],
            "conclusion": to_sexpr(self.conclusion),
        }

    @staticmethod
    def from_json(data, table: TermTable) -> "ProofStep":
        from .terms import from_sexpr
        if not isinstance(data, dict):
            raise ValidationError("proof step must be an object")
        for key in ("kind", "premises", "conclusion"):
            if key not in data:
                raise ValidationError("proof step missing %r" % key)
        subst = {k: from_sexpr(v, table)
                 for k, v in (data.get("substitution") or {}).items()}
        premises = tuple(ProofStep.from_json(p, table) for p in data["premises"])
        return ProofStep(kind=data["kind"], rule_id=data.get("rule"),
                         substitution=subst, premises=premises,
                         conclusion=from_sexpr(data["conclusion"], table))


def initial_step(term: Term) -> ProofStep:
    return ProofStep("initial", None, {}, (), term)


@dataclass
class Stats:
    analyzed_terms: int = 0
    rules_fired: int = 0
    synthesis_calls: int = 0
    rounds_run: int = 0
    candidates_truncated: bool = False

    def to_json(self):
        return {"analyzed_terms": self.analyzed_terms,
                "rules_fired": self.rules_fired,
                "synthesis_calls": self.synthesis_calls,
                "rounds_run": self.rounds_run,
                "candidates_truncated": self.candidates_truncated}


@dataclass(frozen=True)
class Verdict:
    status: str  # attack-found | secure-at-bound
    target: Term
    bounds: Bounds
    stats: Stats
    proof: Optional[ProofStep] = None
    pruning: Optional[dict] = None

    @property
    def attack_found(self) -> bool:
        return self.status == "attack-found"

    def to_json(self):
        out = {"status": self.status,
               "target": to_sexpr(self.target),
               "bounds": self.bounds.to_json(),
               "stats": self.stats.to_json(),
               "bounded_rounds": True}
        if self.proof is not None:
            out["proof"] = self.proof.to_json()
        if self.pruning is not None:
            out["pruning"] = self.pruning
        return out


def _canon_key(pattern: Term):
    """Shape of a pattern with variables numbered by first occurrence, so
    renamed copies of the same pattern collide. Also returns the variable
    names in numbering order, for keys that depend on per-var context."""
    names: Dict[str, int] = {}
    order: List[str] = []

    def walk(t):
        if t.tag == VAR:
            if t.name not in names:
                names[t.name] = len(names)
                order.append(t.name)
            return ("?", names[t.name])
        if not t.has_vars:
            return t.uid
        return (t.tag, t.name, tuple(walk(c) for c in t.children))
    key = ("pat", walk(pattern))
    return key, order


def _var_budgets(bounds: Bounds, patterns: Sequence[Term]) -> Dict[str, int]:
    """Deepest occurrence of each variable across the family's patterns sets
    how large a binding can be before some instance breaks the depth cap."""
    offsets: Dict[str, int] = {}

    def walk(t, depth):
        if t.tag == VAR:
            prev = offsets.get(t.name, -1)
            if depth > prev:
                offsets[t.name] = depth
        else:
            for c in t.children:
                if c.has_vars:
                    walk(c, depth + 1)
    for p in patterns:
        if p.has_vars:
            walk(p, 0)
    return {name: bounds.max_term_depth - off for name, off in offsets.items()}


class Analysis:
    """Mutable search state for one two-phase run."""

    def __init__(self, initial, families, ground_values, composing, decomposing,
                 bounds: Bounds, table: TermTable, instrument: bool = False):
        self.bounds = bounds
        self.table = table
        self.families = tuple(sorted((f for f in families if not f.is_ground()),
                                     key=lambda f: f.family_id))
        self.ground_values = dict(ground_values)
        self.composing = tuple(sorted(composing, key=lambda r: r.rule_id))
        self.decomposing = tuple(sorted(decomposing, key=lambda r: r.rule_id))
        self.instrument = instrument
        self.stats = Stats()
        self.analyzed: Dict[Term, ProofStep] = {}
        self.generation = 0
        self._success: Dict[Term, ProofStep] = {}
        # goal -> (generation, sdepth, tbudget it failed under); a failure
        # only binds while nothing new was analyzed and the retry has no
        # more depth or budget than the recorded attempt
        self._failure: Dict[Term, Tuple[int, int, int]] = {}
        # same idea for variable patterns, keyed by canonical shape plus the
        # per-var budgets that shaped the attempt
        self._pat_failure: Dict[tuple, Tuple[int, int, int]] = {}
        self._sorted_cache: Optional[Tuple[int, List[Term]]] = None
        self._cycle_hits = 0
        # per closure pass, remembers side-premise outcomes so one unknown
        # key is not re-searched for every ciphertext under it
        self._side_cache: Optional[Dict[Term, Optional[ProofStep]]] = None
        # during a wave, variable instantiation draws from the analyzed set
        # as it stood when the wave started, so firing order cannot feed
        # fresh conclusions back into the same wave's candidate space
        self._in_wave = False
        self._wave_base: Optional[List[Term]] = None
        self._fresh = itertools.count()
        self.composed_log: Dict[Term, ProofStep] = {}
        # rules grouped by conclusion head so a goal only meets rules that
        # could produce it; var-headed conclusions apply to every goal
        self._composing_by_head: Dict[str, List[PrimitiveRule]] = {}
        self._any_composing: List[PrimitiveRule] = []
        for r in self.composing:
            if r.conclusion.tag == VAR:
                self._any_composing.append(r)
            else:
                self._composing_by_head.setdefault(r.conclusion.tag, []).append(r)
        # decomposition bookkeeping: analyzed terms grouped by head, and
        # per (term, rule) progress so closure passes stay incremental
        self._by_tag: Dict[str, List[Term]] = {}
        self._tag_cache: Dict[str, Tuple[int, List[Term]]] = {}
        # (tag, child position, child uid) -> terms, so a pattern with a
        # ground child meets only the analyzed terms that share it
        self._child_index: Dict[Tuple[str, int, int], List[Term]] = {}
        self._dec_state: Dict[Tuple[int, str], Tuple[str, int]] = {}
        # a decomposition's output space is fixed once its controlling value
        # is matched iff every rule variable occurs in the controlling pattern
        self._closed_rules = frozenset(
            r.rule_id for r in self.decomposing
            if self._rule_var_set(r) <= set(
                free_vars(r.premises[r.controlling])))
        for t in sorted(initial):
            self.analyzed[t] = initial_step(t)
            self._index_term(t)
        self.stats.analyzed_terms = len(self.analyzed)

    @staticmethod
    def _rule_var_set(rule) -> set:
        out = set(free_vars(rule.conclusion))
        for p in rule.premises:
            out |= free_vars(p)
        return out

    def _goal_composing(self, goal: Term):
        if self._any_composing:
            return self._composing_by_head.get(goal.tag, []) + self._any_composing
        return self._composing_by_head.get(goal.tag, ())

    # -- bookkeeping ---------------------------------------------------

    def _index_term(self, term: Term):
        self._by_tag.setdefault(term.tag, []).append(term)
        for i, c in enumerate(term.children):
            self._child_index.setdefault((term.tag, i, c.uid), []).append(term)

    def _add(self, term: Term, proof: ProofStep) -> bool:
        if term in self.analyzed:
            return False
        self.analyzed[term] = proof
        self._index_term(term)
        self.generation += 1
        self.stats.analyzed_terms = len(self.analyzed)
        return True

    def _analyzed_sorted(self) -> List[Term]:
        if self._sorted_cache is None or self._sorted_cache[0] != self.generation:
            self._sorted_cache = (self.generation, sorted(self.analyzed))
        return self._sorted_cache[1]

    def _tag_sorted(self, tag: str) -> List[Term]:
        bucket = self._by_tag.get(tag)
        if not bucket:
            return []
        cached = self._tag_cache.get(tag)
        if cached is not None and cached[0] == len(bucket):
            return cached[1]
        ordered = sorted(bucket)
        self._tag_cache[tag] = (len(bucket), ordered)
        return ordered

    def _rename(self, terms):
        mapping = {}
        for t in terms:
            for v in free_vars(t):
                if v not in mapping:
                    mapping[v] = "%s'%d" % (v, next(self._fresh))

        def rn(t):
            if not t.has_vars:
                return t
            if t.tag == VAR:
                return self.table.var(mapping[t.name])
            return self.table.intern(t.tag, t.name, tuple(rn(c) for c in t.children))
        return [rn(t) for t in terms], mapping

    def _unify_candidates(self, pattern: Term) -> List[Term]:
        """Analyzed terms worth unifying against the pattern: narrowed to a
        shared ground child when the pattern has one, the whole head bucket
        otherwise. Set patterns match under child swap, so both positions
        count."""
        best = None
        for i, c in enumerate(pattern.children):
            if c.has_vars:
                continue
            if pattern.tag == SET:
                bucket = sorted(
                    set(self._child_index.get((SET, 0, c.uid), []))
                    | set(self._child_index.get((SET, 1, c.uid), [])))
            else:
                bucket = self._child_index.get((pattern.tag, i, c.uid), [])
            if best is None or len(bucket) < len(best):
                best = bucket
            if not best:
                return []
        if best is None:
            return self._tag_sorted(pattern.tag)
        return sorted(best)

    # -- goal-directed synthesis --------------------------------------

    def search(self, goal: Term, subst: Substitution, sdepth: int,
               tbudget: Optional[int], var_budgets: Mapping[str, int],
               active: frozenset
               ) -> Iterator[Tuple[Substitution, ProofStep]]:
        """Yield extensions of subst with proofs for the resolved goal,
        using the adversary's own means: composition from analyzed values
        and replay of analyzed values. Honest responses are never simulated
        here; they enter play one wave at a time through fire_families.

        Ground goals yield at most one proof. Route order is part of the
        output contract: variable goals try constructive composition before
        replaying analyzed values, so recorded traces show how a message was
        built rather than merely that it was seen.
        """
        self.stats.synthesis_calls += 1
        if sdepth <= 0:
            return
        goal = resolve(goal, subst)

        if goal.is_ground():
            proof = self._prove_ground(goal, sdepth, tbudget, active)
            if proof is not None:
                yield subst, proof
            return

        if goal.tag == VAR:
            budget = var_budgets.get(goal.name)
            if tbudget is not None:
                budget = tbudget if budget is None else min(budget, tbudget)
            for cand in self._var_candidates(budget):
                proof = self._prove_ground(cand, sdepth - 1, tbudget, active)
                if proof is not None:
                    ext = dict(subst)
                    ext[goal.name] = cand
                    yield ext, proof
            return

        # a pattern recurring along the proving stack cannot make progress:
        # any solution of the inner occurrence solves the outer one directly
        canon, var_order = _canon_key(goal)
        if canon in active:
            self._cycle_hits += 1
            return
        active = active | {canon}

        tb = 10 ** 9 if tbudget is None else tbudget
        fkey = (canon, tuple(var_budgets.get(n) for n in var_order))
        cached = self._pat_failure.get(fkey)
        if cached is not None and cached[0] == self.generation \
                and cached[1] >= sdepth and cached[2] >= tb:
            return

        goal_vars = sorted(free_vars(goal))

        def binding_key(ext):
            return tuple(resolve(self.table.var(v), ext) for v in goal_vars)

        seen = set()
        hits0 = self._cycle_hits
        for ext, proof in self._compose_routes(goal, subst, sdepth,
                                               tbudget, var_budgets, active):
            key = binding_key(ext)
            if key not in seen:
                seen.add(key)
                yield ext, proof
        for t in self._unify_candidates(goal):
            for ext in unify_all(goal, t, subst):
                key = binding_key(ext)
                if key not in seen:
                    seen.add(key)
                    yield ext, self.analyzed[t]
        # a fruitless pattern stays fruitless while the analyzed set stands
        # still; cycle-pruned attempts depend on the stack, so skip those
        if not seen and self._cycle_hits == hits0:
            self._pat_failure[fkey] = (self.generation, sdepth, tb)

    def _var_candidates(self, budget: Optional[int]):
        base = self._wave_base if self._in_wave else self._analyzed_sorted()
        if budget is None:
            yield from base
            return
        for t in base:
            if t.depth <= budget:
                yield t

    def _prove_ground(self, goal: Term, sdepth: int, tbudget: Optional[int],
                      active: frozenset) -> Optional[ProofStep]:
        hit = self.analyzed.get(goal)
        if hit is not None:
            return hit
        hit = self._success.get(goal)
        if hit is not None:
            return hit
        tb = 10 ** 9 if tbudget is None else tbudget
        cached = self._failure.get(goal)
        if cached is not None and cached[0] == self.generation \
                and cached[1] >= sdepth and cached[2] >= tb:
            return None
        if goal in active:
            self._cycle_hits += 1
            return None
        if sdepth <= 0:
            return None
        active = active | {goal}
        hits0 = self._cycle_hits
        for ext, proof in self._compose_routes(goal, {}, sdepth, tbudget,
                                               {}, active):
            self._success[goal] = proof
            return proof
        if self._cycle_hits == hits0:
            self._failure[goal] = (self.generation, sdepth, tb)
        return None

    def _compose_routes(self, goal, subst, sdepth, tbudget, var_budgets,
                        active):
        for rule in self._goal_composing(goal):
            (conc, *prems), mapping = self._rename((rule.conclusion,) + rule.premises)
            for s0 in unify_all(conc, goal, subst):
                for s1, proofs in self._prove_premises(prems, s0, sdepth - 1,
                                                       None if tbudget is None
                                                       else tbudget - 1,
                                                       var_budgets, active):
                    built = resolve(goal, s1)
                    if not built.is_ground():
                        continue
                    if tbudget is not None and built.depth > tbudget:
                        continue
                    rule_subst = {orig: resolve(self.table.var(fresh), s1)
                                  for orig, fresh in mapping.items()}
                    proof = ProofStep("compose", rule.rule_id, rule_subst,
                                      tuple(proofs), built)
                    self.stats.rules_fired += 1
                    if self.instrument:
                        self.composed_log.setdefault(built, proof)
                    yield s1, proof

    def _prove_premises(self, premises, subst, sdepth, tbudget, var_budgets,
                        active):
        if not premises:
            yield subst, []
            return
        head, rest = premises[0], premises[1:]
        for s1, proof in self.search(head, subst, sdepth, tbudget,
                                     var_budgets, active):
            for s2, proofs in self._prove_premises(rest, s1, sdepth, tbudget,
                                                   var_budgets, active):
                yield s2, [proof] + proofs

    def synth_one(self, goal: Term) -> Optional[ProofStep]:
        return self._prove_ground(goal, self.bounds.max_synthesis_depth,
                                  self.bounds.max_term_depth, frozenset())

    # -- decomposition closure ----------------------------------------

    def close(self) -> bool:
        """Decomposition fixpoint. A (term, rule) pair is retried only after
        the analyzed set has grown past its last failure; pairs whose output
        is fixed by the controlling match are settled once and for all."""
        changed_any = False
        while True:
            changed = False
            self._side_cache = {}
            for rule in self.decomposing:
                head = rule.premises[rule.controlling].tag
                if head == VAR:
                    bucket = self._analyzed_sorted()
                else:
                    bucket = self._tag_sorted(head)
                closing = rule.rule_id in self._closed_rules
                for term in bucket:
                    key = (term.uid, rule.rule_id)
                    state = self._dec_state.get(key)
                    if state is not None:
                        if state[0] == "done" or state[1] == self.generation:
                            continue
                    added, stuck = self._decompose(term, rule)
                    if added:
                        changed = True
                    if stuck or not closing:
                        self._dec_state[key] = ("blocked", self.generation)
                    else:
                        self._dec_state[key] = ("done", self.generation)
            if not changed:
                break
            changed_any = True
        self._side_cache = None
        return changed_any

    def _decompose(self, term: Term, rule: PrimitiveRule) -> Tuple[bool, bool]:
        controlling = rule.premises[rule.controlling]
        added = False
        stuck = False
        for s0 in match_all(controlling, term):
            proofs_by_slot = {rule.controlling: self.analyzed[term]}
            sides = [(i, p) for i, p in enumerate(rule.premises)
                     if i != rule.controlling]
            solutions = [(s0, dict(proofs_by_slot))]
            for i, pat in sides:
                nxt = []
                for s, acc in solutions:
                    pat_r = resolve(pat, s)
                    conc_vars = free_vars(resolve(rule.conclusion, s))
                    want_all = bool(free_vars(pat_r) & conc_vars)
                    cache = self._side_cache
                    if not pat_r.has_vars and cache is not None \
                            and pat_r in cache:
                        proof = cache[pat_r]
                        if proof is None:
                            stuck = True
                        else:
                            acc2 = dict(acc)
                            acc2[i] = proof
                            nxt.append((s, acc2))
                        continue
                    first = None
                    for s2, proof in self.search(
                            pat, s, self.bounds.max_synthesis_depth,
                            self.bounds.max_term_depth, {}, frozenset()):
                        if first is None:
                            first = proof
                        acc2 = dict(acc)
                        acc2[i] = proof
                        nxt.append((s2, acc2))
                        if not want_all:
                            break  # one witness settles a don't-care premise
                    if first is None:
                        stuck = True
                    if not pat_r.has_vars and cache is not None:
                        cache[pat_r] = first
                solutions = nxt
            rule_vars = set(free_vars(rule.conclusion))
            for p in rule.premises:
                rule_vars |= set(free_vars(p))
            for s, acc in solutions:
                conclusion = resolve(rule.conclusion, s)
                if not conclusion.is_ground():
                    continue
                if conclusion in self.analyzed:
                    continue
                if conclusion.depth > self.bounds.max_term_depth:
                    continue
                ordered = tuple(acc[i] for i in range(len(rule.premises)))
                family_id = (self.ground_values.get(term)
                             if rule.rule_id == "rule-apply" else None)
                if family_id is not None:
                    trigger = ordered[0] if rule.controlling == 1 else ordered[1]
                    proof = ProofStep("protocol-rule", family_id, {},
                                      (trigger,), conclusion)
                else:
                    subst_out = {k: resolve(self.table.var(k), s)
                                 for k in sorted(rule_vars & set(s))}
                    proof = ProofStep("decompose", rule.rule_id, subst_out,
                                      ordered, conclusion)
                self.stats.rules_fired += 1
                if self._add(conclusion, proof):
                    added = True
        return added, stuck

    # -- protocol-rule waves ------------------------------------------

    def fire_families(self) -> bool:
        self._wave_base = self._wave_candidates()
        self._in_wave = True
        try:
            return self._fire_families()
        finally:
            self._in_wave = False
            self._wave_base = None

    def _wave_candidates(self) -> List[Term]:
        """Instantiation pool for a wave's bare variables.

        A rule instance may mention any value the adversary can produce, not
        just the ones analysis has stored, so the pool is the closure of the
        analyzed set under composing rules, capped at the term-depth bound.
        When that closure overflows WAVE_CANDIDATE_CAP the wave falls back to
        the analyzed set alone and says so in the statistics; verdicts stay
        sound, the bound just excludes manufactured filler values.
        """
        base = self._analyzed_sorted()
        if not self.composing:
            return base
        caps = {r.rule_id: _var_budgets(self.bounds, [r.conclusion])
                for r in self.composing}
        members = set(base)
        ordered = list(base)
        frontier = set(base)
        while frontier:
            new = set()
            for rule in self.composing:
                for s in _join_premises(rule.premises, ordered, members,
                                        frontier, caps[rule.rule_id]):
                    c = resolve(rule.conclusion, s)
                    if not c.is_ground():
                        continue
                    if c.depth > self.bounds.max_term_depth:
                        continue
                    if c in members or c in new:
                        continue
                    new.add(c)
                    if len(members) + len(new) > WAVE_CANDIDATE_CAP:
                        self.stats.candidates_truncated = True
                        return base
            members |= new
            ordered = sorted(members)
            frontier = new
        return ordered

    def _fire_families(self) -> bool:
        added = False
        for fam in self.families:
            (conc, *prems), mapping = self._rename((fam.conclusion,) + fam.premises)
            budgets = _var_budgets(self.bounds, [conc] + prems)
            for s, proofs in self._prove_premises(
                    prems, {}, self.bounds.max_synthesis_depth,
                    self.bounds.max_term_depth, budgets, frozenset()):
                conclusion = resolve(conc, s)
                if not conclusion.is_ground():
                    continue
                if conclusion.depth > self.bounds.max_term_depth:
                    continue
                if conclusion in self.analyzed:
                    continue
                fam_subst = {orig: resolve(self.table.var(fresh), s)
                             for orig, fresh in mapping.items()}
                proof = ProofStep("protocol-rule", fam.family_id, fam_subst,
                                  tuple(proofs), conclusion)
                self.stats.rules_fired += 1
                if self._add(conclusion, proof):
                    added = True
        return added

    def run_rounds(self):
        self.close()
        for n in range(self.bounds.max_rounds):
            fired = self.fire_families()
            closed = self.close()
            self.stats.rounds_run = n + 1
            if not fired and not closed:
                break

    # -- instrumentation (two-phase pruning check) ---------------------

    def pruning_report(self) -> dict:
        fired = 0
        violations = []
        for value in sorted(self.composed_log):
            for rule in self.decomposing:
                controlling = rule.premises[rule.controlling]
                for s0 in match_all(controlling, value):
                    sides = [(i, p) for i, p in enumerate(rule.premises)
                             if i != rule.controlling]
                    sols = [s0]
                    for _, pat in sides:
                        nxt = []
                        for s in sols:
                            for s2, _ in self.search(
                                    pat, s, self.bounds.max_synthesis_depth,
                                    self.bounds.max_term_depth, {}, frozenset()):
                                nxt.append(s2)
                                break
                        sols = nxt
                    for s in sols:
                        conclusion = resolve(rule.conclusion, s)
                        if not conclusion.is_ground():
                            continue
                        fired += 1
                        if (conclusion not in self.analyzed
                                and self.synth_one(conclusion) is None):
                            violations.append({
                                "rule": rule.rule_id,
                                "composed": to_sexpr(value),
                                "extracted": to_sexpr(conclusion),
                            })
        return {"composed_values": len(self.composed_log),
                "decompositions_checked": fired,
                "violations": violations}


def _join_premises(slots, ordered, members, delta, var_caps):
    """Substitutions placing every premise instance inside `members`, with at
    least one instance landing in `delta` (the newest additions). Bare-var
    slots honor the conclusion-side depth cap so fixpoint passes do not churn
    through bindings whose conclusions the depth bound would discard anyway."""

    def go(slots, subst, used_delta):
        if not slots:
            if used_delta:
                yield subst
            return
        pat = resolve(slots[0], subst)
        rest = slots[1:]
        if pat.is_ground():
            if pat in members:
                yield from go(rest, subst, used_delta or pat in delta)
            return
        if pat.tag == VAR:
            cap = var_caps.get(pat.name)
            for t in ordered:
                if cap is not None and t.depth > cap:
                    continue
                ext = dict(subst)
                ext[pat.name] = t
                yield from go(rest, ext, used_delta or t in delta)
            return
        for t in ordered:
            if t.tag != pat.tag:
                continue
            for s2 in match_all(pat, t, subst):
                yield from go(rest, s2, used_delta or t in delta)

    yield from go(list(slots), {}, False)


# -- one-step operators over full knowledge states ---------------------


def f_step(k: KnowledgeState, rules, universe) -> KnowledgeState:
    """One simultaneous application of every rule instance: the learner picks
    up the taught value when the teller knows it and the learner meets the
    premises."""
    new_facts = []
    for rule in sorted(rules, key=lambda r: r.rule_id):
        for inst in pattern_rule_instances(rule, sorted(universe)):
            if not k.knows(inst.teller, inst.taught):
                continue
            if all(k.knows(inst.learner, p) for p in inst.premises):
                new_facts.append((inst.learner, inst.taught))
    return k.with_facts(new_facts)


def g_step(X, projected, universe):
    """One application of every projected rule over the adversary's set."""
    X = frozenset(X)
    out = set(X)
    for rule in sorted(projected, key=lambda r: r.rule_id):
        for inst in projected_rule_instances(rule, sorted(universe)):
            if all(p in X for p in inst.premises):
                out.add(inst.conclusion)
    return frozenset(out)


# -- naive saturation oracle ------------------------------------------


def _slot_candidates(pattern, subst, index, all_terms):
    bound = resolve(pattern, subst)
    if bound.is_ground():
        return (bound,), True  # membership check
    if bound.tag == VAR:
        return all_terms, False
    return index.get((bound.tag, bound.name), ()), False


def _oracle_solutions(slots, subst, members, index, all_terms, delta,
                      delta_used):
    """Join the premise patterns against the current set, requiring at least
    one premise to land in the newest delta."""
    if not slots:
        if delta_used:
            yield subst
        return
    # most-constrained slot first keeps the join from exploding
    best = None
    for slot in slots:
        cands, is_member = _slot_candidates(slot, subst, index, all_terms)
        size = 1 if is_member else len(cands)
        if best is None or size < best[2]:
            best = (slot, cands, size, is_member)
        if is_member:
            break
    slot, cands, _, is_member = best
    rest = [s for s in slots if s is not slot]
    if is_member:
        t = cands[0]
        if t in members:
            yield from _oracle_solutions(rest, subst, members, index,
                                         all_terms, delta,
                                         delta_used or t in delta)
        return
    for t in cands:
        for s2 in match_all(slot, t, subst):
            yield from _oracle_solutions(rest, s2, members, index,
                                         all_terms, delta,
                                         delta_used or t in delta)


def saturate_naive(X0, projected, bounds: Bounds,
                   universe_cap: int = DEFAULT_UNIVERSE_CAP) -> FrozenSet[Term]:
    """Ground fixpoint of all projected rules, conclusions depth-capped.
    Initial terms are exempt from the cap; everything derived respects it."""
    members = set(X0)
    index: Dict[tuple, list] = {}

    def index_add(t):
        index.setdefault((t.tag, t.name), []).append(t)

    for t in sorted(members):
        index_add(t)
    rules = sorted(projected, key=lambda r: r.rule_id)
    delta = set(members)
    first = True
    while delta:
        all_terms = sorted(members)
        new = set()

        def admit(c):
            new.add(c)
            # checked per term, not per pass: one pass over a productive
            # rule set can otherwise blow far past the cap before anyone looks
            if len(members) + len(new) > universe_cap:
                raise ResourceError(
                    "saturation exceeded the universe cap",
                    count=len(members) + len(new), cap=universe_cap)

        for rule in rules:
            if not rule.premises:
                if first:
                    c = rule.conclusion
                    if c.is_ground() and c not in members:
                        admit(c)
                continue
            for subst in _oracle_solutions(list(rule.premises), {}, members,
                                           index, all_terms, delta, False):
                c = resolve(rule.conclusion, subst)
                if not c.is_ground():
                    continue
                if c.depth > bounds.max_term_depth:
                    continue
                if c not in members and c not in new:
                    admit(c)
        first = False
        members |= new
        for t in sorted(new):
            index_add(t)
        delta = new
    return frozenset(members)


# -- public two-phase operations --------------------------------------


def analyze(X0, decomposing, composing, bounds: Bounds,
            table: Optional[TermTable] = None) -> FrozenSet[Term]:
    table = table or _table_of(X0)
    a = Analysis(X0, (), {}, composing, decomposing, bounds, table)
    a.close()
    return frozenset(a.analyzed)


def synthesize(target: Term, analyzed, composing, depth: int) -> Optional[ProofStep]:
    bounds = Bounds(max_term_depth=0, max_rounds=0, max_synthesis_depth=depth)
    a = Analysis(analyzed, (), {}, composing, (), bounds, target.table)
    return a._prove_ground(target, depth, None, frozenset())


def _table_of(terms):
    for t in terms:
        return t.table
    from .terms import DEFAULT_TABLE
    return DEFAULT_TABLE


def _compiled(protocol) -> CompiledProtocol:
    if isinstance(protocol, CompiledProtocol):
        return protocol
    compile_fn = getattr(protocol, "compile", None)
    if compile_fn is None:
        raise ValidationError("not a protocol: %r" % (protocol,))
    return compile_fn()


def _check_target(target: Term, protocol: CompiledProtocol):
    if not target.is_ground():
        raise ValidationError("query target must be ground")
    unknown = sorted(
        t.name for t in target.subterms()
        if t.tag in (ATOM, IDENT) and t not in protocol.known_atoms)
    if unknown:
        raise ValidationError(
            "query target mentions unknown atoms: %s" % ", ".join(unknown))


def derivable(target: Term, protocol, bounds: Bounds = Bounds(),
              instrument: bool = False, drop_rules=()) -> Verdict:
    proto = _compiled(protocol)
    _check_target(target, proto)
    dropped = frozenset(drop_rules)

    def keep(rules):
        return tuple(r for r in rules if r.rule_id not in dropped)

    # a ground family lives as a rule-value in the initial knowledge, so
    # dropping it means withholding that value
    drop_values = {t for t, fid in proto.ground_values.items() if fid in dropped}
    initial = tuple(t for t in proto.initial if t not in drop_values)
    ground_values = {t: fid for t, fid in proto.ground_values.items()
                     if fid not in dropped}
    a = Analysis(initial, keep(proto.quantified_families()), ground_values,
                 keep(proto.composing), keep(proto.decomposing), bounds,
                 proto.table, instrument=instrument)
    a.close()
    for n in range(bounds.max_rounds):
        if target in a.analyzed:
            break
        fired = a.fire_families()
        closed = a.close()
        a.stats.rounds_run = n + 1
        if not fired and not closed:
            break
    proof = a.synth_one(target)
    pruning = a.pruning_report() if instrument else None
    if proof is not None:
        return Verdict("attack-found", target, bounds, a.stats, proof=proof,
                       pruning=pruning)
    return Verdict("secure-at-bound", target, bounds, a.stats, pruning=pruning)


# -- proof replay ------------------------------------------------------


def replay(proof, protocol) -> bool:
    """Re-check every step against the protocol's rules; no search involved."""
    proto = _compiled(protocol)
    if isinstance(proof, dict):
        proof = ProofStep.from_json(proof, proto.table)
    if not isinstance(proof, ProofStep):
        raise ValidationError("not a proof: %r" % (proof,))
    initial = frozenset(proto.initial)
    ground_by_id = {fid: rv for rv, fid in proto.ground_values.items()}

    def check(step: ProofStep) -> bool:
        if not isinstance(step.conclusion, Term) or not step.conclusion.is_ground():
            raise ValidationError("proof conclusions must be ground terms")
        if step.kind == "initial":
            return step.conclusion in initial and not step.premises
        rule = proto.rule(step.rule_id) if step.rule_id else None
        if rule is None:
            return False
        if step.kind in ("compose", "decompose"):
            if not isinstance(rule, PrimitiveRule):
                return False
            if (step.kind == "decompose") != rule.is_decomposing:
                return False
            subst = dict(step.substitution)
            try:
                want = [instantiate(p, subst) for p in rule.premises]
                conclusion = instantiate(rule.conclusion, subst)
            except ValidationError:
                return False
        elif step.kind == "protocol-rule":
            if not isinstance(rule, RuleFamily):
                return False
            value = ground_by_id.get(step.rule_id)
            if value is not None:
                # ground family: fires off its packaged trigger message
                trigger, conclusion = value.children
                if step.substitution or len(step.premises) != 1:
                    return False
                if step.premises[0].conclusion is not trigger:
                    return False
                if conclusion is not step.conclusion:
                    return False
                return check(step.premises[0])
            subst = dict(step.substitution)
            try:
                want = [instantiate(p, subst) for p in rule.premises]
                conclusion = instantiate(rule.conclusion, subst)
            except ValidationError:
                return False
        else:
            raise ValidationError("unknown proof step kind %r" % step.kind)
        if conclusion is not step.conclusion:
            return False
        if len(want) != len(step.premises):
            return False
        for pat, child in zip(want, step.premises):
            if child.conclusion is not pat:
                return False
        return all(check(child) for child in step.premises)

    return check(proof)


def linearize(proof: ProofStep) -> List[ProofStep]:
    """Post-order walk with duplicates removed: a numbered attack narrative."""
    seen = {}
    order: List[ProofStep] = []

    def walk(step):
        for child in step.premises:
            walk(child)
        if step.conclusion not in seen:
            seen[step.conclusion] = step
            order.append(step)
    walk(proof)
    return order


def render_trace(proof: ProofStep) -> List[str]:
    lines = []
    for i, step in enumerate(linearize(proof), start=1):
        if step.kind == "initial":
            lines.append("%2d. Oscar starts with %s"
                         % (i, to_sexpr(step.conclusion)))
            continue
        srcs = ", ".join(to_sexpr(p.conclusion) for p in step.premises)
        via = step.rule_id or step.kind
        if srcs:
            lines.append("%2d. Oscar learns %s via %s from %s"
                         % (i, to_sexpr(step.conclusion), via, srcs))
        else:
            lines.append("%2d. Oscar learns %s via %s"
                         % (i, to_sexpr(step.conclusion), via))
    return lines
