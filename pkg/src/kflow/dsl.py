"""Protocol surface syntax.

A protocol file is one s-expression: principals, keypairs, plain atoms, the
enabled primitives, the adversary's initial knowledge, protocol rule
families, and named secrecy queries. Role quantifiers expand at load time,
so a parsed spec holds only concrete families; `pretty_print` emits that
expanded form and parses back to an equal spec.

Rule families without variables compile to rule-values in the initial
knowledge (their premises packaged as a single trigger message); quantified
families stay symbolic and fire inside the engine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from . import sexpr
from .engine import CompiledProtocol, RuleFamily
from .errors import ParseError, TermError, ValidationError
from .knowledge import MERGED_ADVERSARY, Principal, PrincipalKind
from .primitives import PrimitiveSpec, builtin_spec_map, spec_rules
from .terms import (
    CONSTRUCTOR_TAGS,
    DEFAULT_TABLE,
    IDENT,
    VAR,
    _UNARY_TAGS,
    Term,
    TermTable,
    free_vars,
    to_sexpr,
)

_DECL_HEADS = ("principal", "keypair", "atom", "use-primitives", "knows",
               "rule", "query", "forall")


def _sk_name(principal: str) -> str:
    return "sk-%s" % principal


@dataclass(frozen=True)
class ProtocolSpec:
    """A parsed protocol, fully role-expanded."""

    name: str
    principals: Tuple[Principal, ...]
    atoms: Tuple[str, ...]
    keypairs: Tuple[str, ...]
    initial_facts: Tuple[Tuple[str, Term], ...]
    families: Tuple[RuleFamily, ...]
    primitives: Tuple[str, ...]
    queries: Tuple[Tuple[str, Term], ...]
    table: TermTable = field(compare=False, repr=False, default=DEFAULT_TABLE)

    def __post_init__(self):
        kinds = {p.name: p.kind for p in self.principals}
        if len(kinds) != len(self.principals):
            raise ValidationError("duplicate principal declarations")
        if not any(k is PrincipalKind.ADVERSARY for k in kinds.values()):
            raise ValidationError("protocol needs at least one adversary")
        known = builtin_spec_map(self.table)
        for name in self.primitives:
            if name not in known:
                raise ValidationError("unknown primitive %r" % name)
        for p in self.keypairs:
            if p not in kinds:
                raise ValidationError("keypair for undeclared principal %r" % p)
        for who, fact in self.initial_facts:
            if who not in kinds:
                raise ValidationError("initial fact for undeclared principal %r" % who)
            if not fact.is_ground():
                raise ValidationError("initial knowledge must be ground")
        seen_fam = set()
        for fam in self.families:
            if fam.family_id in seen_fam:
                raise ValidationError("duplicate rule family %r" % fam.family_id)
            seen_fam.add(fam.family_id)
            bound = set()
            for p in fam.premises:
                bound |= free_vars(p)
            loose = sorted(free_vars(fam.conclusion) - bound)
            if loose:
                raise ValidationError(
                    "rule %s: unbound variable %s in conclusion"
                    % (fam.family_id, ", ".join(loose)))
        seen_q = set()
        for qname, target in self.queries:
            if qname in seen_q:
                raise ValidationError("duplicate query %r" % qname)
            seen_q.add(qname)
            if not target.is_ground():
                raise ValidationError("query %r target must be ground" % qname)

    def adversaries(self) -> Tuple[str, ...]:
        return tuple(p.name for p in self.principals
                     if p.kind is PrincipalKind.ADVERSARY)

    def query(self, name: str) -> Term:
        for qname, target in self.queries:
            if qname == name:
                return target
        raise ValidationError("protocol %r has no query %r" % (self.name, name))

    def primitive_specs(self) -> Tuple[PrimitiveSpec, ...]:
        """The enabled primitive specs, nonce minting bound to the adversary."""
        table = self.table
        known = builtin_spec_map(table)
        advs = self.adversaries()
        minter = advs[0] if len(advs) == 1 else MERGED_ADVERSARY
        out = []
        for name in self.primitives:
            spec = known[name]
            if name == "nonce":
                v = table.var("v")
                spec = replace(spec, schema=(
                    v, table.nonce(v, table.ident(minter))))
            out.append(spec)
        return tuple(out)

    def compile(self) -> CompiledProtocol:
        table = self.table
        composing: List = []
        decomposing: List = []
        for spec in self.primitive_specs():
            for rule in spec_rules(spec):
                (decomposing if rule.is_decomposing else composing).append(rule)

        advs = set(self.adversaries())
        initial = {fact for who, fact in self.initial_facts if who in advs}
        initial.add(table.eps())

        ground_values: Dict[Term, str] = {}
        for fam in self.families:
            if not fam.is_ground():
                continue
            if "rule" not in self.primitives:
                raise ValidationError(
                    "rule family %s has no variables and needs the rule "
                    "primitive to be carried as a value" % fam.family_id)
            if not fam.premises:
                trigger = table.eps()
            elif len(fam.premises) == 1:
                trigger = fam.premises[0]
            else:
                if "pair" not in self.primitives:
                    raise ValidationError(
                        "rule family %s has several premises and needs the "
                        "pair primitive to package them" % fam.family_id)
                trigger = fam.premises[-1]
                for p in reversed(fam.premises[:-1]):
                    trigger = table.pair(p, trigger)
            value = table.rule_val(trigger, fam.conclusion)
            ground_values[value] = fam.family_id
            initial.add(value)

        known_atoms = {table.ident(p.name) for p in self.principals}
        known_atoms.update(table.atom(a) for a in self.atoms)
        known_atoms.update(table.atom(_sk_name(p)) for p in self.keypairs)

        return CompiledProtocol(
            name=self.name,
            table=table,
            initial=tuple(sorted(initial)),
            families=self.families,
            ground_values=ground_values,
            composing=tuple(composing),
            decomposing=tuple(decomposing),
            known_atoms=frozenset(known_atoms),
            queries=dict(self.queries))


class _Parser:
    """Single-protocol parser: collects every positioned error it can."""

    def __init__(self, table: TermTable):
        self.table = table
        self.errors: List[Tuple[int, int, str]] = []
        self.principals: Dict[str, PrincipalKind] = {}
        self.atoms: List[str] = []
        self.keypairs: List[str] = []
        self.primitives: List[str] = []
        self.initial_facts: List[Tuple[str, Term]] = []
        self.families: List[RuleFamily] = []
        self.queries: List[Tuple[str, Term]] = []

    def err(self, node, message: str):
        self.errors.append((node.line, node.col, message))

    def sym(self, node, what: str) -> Optional[str]:
        if isinstance(node, sexpr.Sym):
            return node.text
        self.err(node, "expected %s, got a list" % what)
        return None

    # -- first pass: names ---------------------------------------------

    def collect(self, decls):
        known = builtin_spec_map(self.table)
        for decl in decls:
            if not isinstance(decl, sexpr.SList) or decl.head() is None:
                self.err(decl, "expected a declaration list")
                continue
            head = decl.head()
            if head not in _DECL_HEADS:
                self.err(decl, "unknown declaration %r" % head)
            elif head == "principal":
                self.decl_principal(decl)
            elif head == "keypair":
                if len(decl) != 2:
                    self.err(decl, "(keypair name) takes one name")
                    continue
                name = self.sym(decl[1], "a principal name")
                if name is None:
                    continue
                if name in self.keypairs:
                    self.err(decl[1], "duplicate keypair for %r" % name)
                else:
                    self.keypairs.append(name)
            elif head == "atom":
                if len(decl) != 2:
                    self.err(decl, "(atom name) takes one name")
                    continue
                name = self.sym(decl[1], "an atom name")
                if name is None:
                    continue
                if name in self.atoms or name == "eps":
                    self.err(decl[1], "duplicate atom %r" % name)
                else:
                    self.atoms.append(name)
            elif head == "use-primitives":
                for item in decl.items[1:]:
                    name = self.sym(item, "a primitive name")
                    if name is None:
                        continue
                    if name not in known:
                        self.err(item, "unknown primitive %r" % name)
                    elif name not in self.primitives:
                        self.primitives.append(name)

    def decl_principal(self, decl):
        if len(decl) != 3:
            self.err(decl, "(principal name honest|adversary) takes two parts")
            return
        name = self.sym(decl[1], "a principal name")
        kind = self.sym(decl[2], "a principal kind")
        if name is None or kind is None:
            return
        if kind not in ("honest", "adversary"):
            self.err(decl[2], "principal kind must be honest or adversary")
            return
        if name in self.principals:
            self.err(decl[1], "duplicate principal %r" % name)
            return
        self.principals[name] = PrincipalKind(kind)

    # -- second pass: terms, rules, queries ----------------------------

    def atom_names(self) -> set:
        return set(self.atoms) | {_sk_name(p) for p in self.keypairs}

    def term(self, node, allow_vars: bool) -> Optional[Term]:
        if isinstance(node, sexpr.Sym):
            if node.text == "eps":
                return self.table.eps()
            if node.text in self.atom_names():
                return self.table.atom(node.text)
            self.err(node, "undeclared name %r" % node.text)
            return None
        head = node.head()
        if head is None:
            self.err(node, "expected a term")
            return None
        args = node.items[1:]
        if head == "sk":
            if len(args) != 1:
                self.err(node, "(sk principal) takes one name")
                return None
            name = self.sym(args[0], "a principal name")
            if name is None:
                return None
            if name not in self.keypairs:
                self.err(args[0], "no keypair declared for %r" % name)
                return None
            return self.table.atom(_sk_name(name))
        if head == IDENT:
            if len(args) != 1:
                self.err(node, "(id principal) takes one name")
                return None
            name = self.sym(args[0], "a principal name")
            if name is None:
                return None
            if name not in self.principals:
                self.err(args[0], "undeclared principal %r" % name)
                return None
            return self.table.ident(name)
        if head == VAR:
            if len(args) != 1:
                self.err(node, "(var name) takes one name")
                return None
            name = self.sym(args[0], "a variable name")
            if name is None:
                return None
            if not allow_vars:
                self.err(node, "variables are only allowed in rules")
                return None
            return self.table.var(name)
        if head in CONSTRUCTOR_TAGS and head != "rule-val":
            want = 1 if head in _UNARY_TAGS else 2
            if len(args) != want:
                self.err(node, "(%s ...) takes %d argument(s)" % (head, want))
                return None
            kids = [self.term(a, allow_vars) for a in args]
            if any(k is None for k in kids):
                return None
            try:
                return self.table.intern(head, children=tuple(kids))
            except TermError as exc:
                self.err(node, str(exc))
                return None
        self.err(node, "unknown term form %r" % head)
        return None

    def process(self, decls):
        for decl in decls:
            if not isinstance(decl, sexpr.SList):
                continue
            head = decl.head()
            if head == "knows":
                self.decl_knows(decl)
            elif head == "rule":
                self.decl_rule(decl, suffix=())
            elif head == "query":
                self.decl_query(decl, suffix=())
            elif head == "forall":
                self.decl_forall(decl)

    def decl_knows(self, decl):
        if len(decl) != 3:
            self.err(decl, "(knows principal term) takes two parts")
            return
        name = self.sym(decl[1], "a principal name")
        if name is None:
            return
        if name not in self.principals:
            self.err(decl[1], "undeclared principal %r" % name)
            return
        fact = self.term(decl[2], allow_vars=False)
        if fact is not None:
            self.initial_facts.append((name, fact))

    def decl_rule(self, decl, suffix: Tuple[str, ...]):
        if len(decl) < 3 or not isinstance(decl[1], sexpr.Sym):
            self.err(decl, "(rule name (premise t)* (conclude t)) expected")
            return
        name = decl[1].text
        if suffix:
            name = "%s.%s" % (name, ".".join(suffix))
        premises: List[Term] = []
        conclusion = None
        broken = False
        for part in decl.items[2:]:
            if not isinstance(part, sexpr.SList) or len(part) != 2:
                self.err(part, "expected (premise term) or (conclude term)")
                broken = True
                continue
            kind = part.head()
            built = self.term(part[1], allow_vars=True)
            if built is None:
                broken = True
            if kind == "premise":
                if built is not None:
                    premises.append(built)
            elif kind == "conclude":
                if conclusion is not None:
                    self.err(part, "rule %s has several conclusions" % name)
                    broken = True
                conclusion = built
            else:
                self.err(part, "expected (premise term) or (conclude term)")
                broken = True
        if conclusion is None:
            if not broken:
                self.err(decl, "rule %s has no conclusion" % name)
            return
        if broken:
            return
        bound = set()
        for p in premises:
            bound |= free_vars(p)
        for loose in sorted(free_vars(conclusion) - bound):
            self.err(decl, "unbound variable %s in rule %s" % (loose, name))
            broken = True
        if broken:
            return
        if any(f.family_id == name for f in self.families):
            self.err(decl[1], "duplicate rule family %r" % name)
            return
        self.families.append(RuleFamily(name, tuple(premises), conclusion))

    def decl_query(self, decl, suffix: Tuple[str, ...]):
        if len(decl) != 3 or not isinstance(decl[1], sexpr.Sym):
            self.err(decl, "(query name term) takes a name and a term")
            return
        name = decl[1].text
        if suffix:
            name = "%s.%s" % (name, ".".join(suffix))
        target = self.term(decl[2], allow_vars=False)
        if target is None:
            return
        if any(q == name for q, _ in self.queries):
            self.err(decl[1], "duplicate query %r" % name)
            return
        self.queries.append((name, target))

    def decl_forall(self, decl):
        if len(decl) < 3:
            self.err(decl, "(forall (name in (values...))+ decl) expected")
            return
        binders: List[Tuple[str, Tuple[str, ...]]] = []
        for part in decl.items[1:-1]:
            if (not isinstance(part, sexpr.SList) or len(part) != 3
                    or not isinstance(part[0], sexpr.Sym)
                    or not isinstance(part[1], sexpr.Sym)
                    or part[1].text != "in"
                    or not isinstance(part[2], sexpr.SList)):
                self.err(part, "expected a binder (name in (values...))")
                return
            values = []
            for v in part[2].items:
                name = self.sym(v, "a principal name")
                if name is None:
                    return
                if name not in self.principals:
                    self.err(v, "undeclared principal %r" % name)
                    return
                values.append(name)
            if not values:
                self.err(part[2], "binder domain is empty")
                return
            binders.append((part[0].text, tuple(values)))
        body = decl.items[-1]
        if not isinstance(body, sexpr.SList) or body.head() not in ("rule", "query"):
            self.err(body, "forall body must be a rule or query")
            return
        names = [b for b, _ in binders]
        for combo in itertools.product(*[vals for _, vals in binders]):
            expanded = _substitute(body, dict(zip(names, combo)))
            if body.head() == "rule":
                self.decl_rule(expanded, suffix=combo)
            else:
                self.decl_query(expanded, suffix=combo)

    def build(self, name: str) -> ProtocolSpec:
        if self.errors:
            raise ParseError(sorted(set(self.errors)))
        primitives = tuple(self.primitives) if self.primitives \
            else tuple(builtin_spec_map(self.table))
        return ProtocolSpec(
            name=name,
            principals=tuple(Principal(n, k)
                             for n, k in self.principals.items()),
            atoms=tuple(self.atoms),
            keypairs=tuple(self.keypairs),
            initial_facts=tuple(self.initial_facts),
            families=tuple(self.families),
            primitives=primitives,
            queries=tuple(self.queries),
            table=self.table)


def _substitute(node, mapping: Dict[str, str]):
    """Replace bound role symbols throughout a declaration body."""
    if isinstance(node, sexpr.Sym):
        hit = mapping.get(node.text)
        if hit is None:
            return node
        return sexpr.Sym(hit, node.line, node.col)
    return sexpr.SList(tuple(_substitute(i, mapping) for i in node.items),
                       node.line, node.col)


def parse(text: str, table: Optional[TermTable] = None) -> ProtocolSpec:
    table = table or DEFAULT_TABLE
    forms = sexpr.read_all(text)
    if not forms:
        raise ParseError([(1, 1, "missing protocol form")])
    if len(forms) > 1:
        extra = forms[1]
        raise ParseError([(extra.line, extra.col,
                           "expected a single protocol form")])
    form = forms[0]
    if not isinstance(form, sexpr.SList) or form.head() != "protocol":
        raise ParseError([(form.line, form.col, "missing protocol form")])
    if len(form) < 2 or not isinstance(form[1], sexpr.Sym):
        raise ParseError([(form.line, form.col, "protocol needs a name")])
    parser = _Parser(table)
    decls = form.items[2:]
    parser.collect(decls)
    parser.process(decls)
    return parser.build(form[1].text)


def pretty_print(spec: ProtocolSpec) -> str:
    lines = ["(protocol %s" % spec.name]
    for p in spec.principals:
        lines.append("  (principal %s %s)" % (p.name, p.kind.value))
    for p in spec.keypairs:
        lines.append("  (keypair %s)" % p)
    for a in spec.atoms:
        lines.append("  (atom %s)" % a)
    lines.append("  (use-primitives %s)" % " ".join(spec.primitives))
    for who, fact in spec.initial_facts:
        lines.append("  (knows %s %s)" % (who, to_sexpr(fact)))
    for fam in spec.families:
        parts = ["  (rule %s" % fam.family_id]
        parts.extend("(premise %s)" % to_sexpr(p) for p in fam.premises)
        parts.append("(conclude %s))" % to_sexpr(fam.conclusion))
        lines.append(" ".join(parts))
    for qname, target in spec.queries:
        lines.append("  (query %s %s)" % (qname, to_sexpr(target)))
    lines.append(")")
    return "\n".join(lines) + "\n"


# -- builtin protocols --------------------------------------------------


_HONEST = ("a", "b")
_EVERYONE = ("a", "b", "o")


def _builtin(name: str, lowe: bool, table: TermTable) -> ProtocolSpec:
    sk = {p: table.atom(_sk_name(p)) for p in _EVERYONE}
    pk = {p: table.pk(sk[p]) for p in _EVERYONE}
    ids = {p: table.ident(p) for p in _EVERYONE}
    v = table.var("v")

    families = []
    for p in _HONEST:
        mine = table.nonce(table.eps(), ids[p])
        for q in _EVERYONE:
            families.append(RuleFamily(
                "ns1.%s.%s" % (p, q), (),
                table.enc(pk[q], table.pair(ids[p], mine))))
    for p in _HONEST:
        for q in _EVERYONE:
            trigger = table.enc(pk[p], table.pair(ids[q], v))
            fresh = table.nonce(trigger, ids[p])
            reply = table.pair(fresh, ids[p]) if lowe else fresh
            families.append(RuleFamily(
                "ns2.%s.%s" % (p, q), (trigger,),
                table.enc(pk[q], table.pair(v, reply))))
    for p in _HONEST:
        mine = table.nonce(table.eps(), ids[p])
        for q in _EVERYONE:
            if lowe:
                trigger = table.enc(pk[p], table.pair(
                    mine, table.pair(v, ids[q])))
            else:
                trigger = table.enc(pk[p], table.pair(mine, v))
            families.append(RuleFamily(
                "ns3.%s.%s" % (p, q), (trigger,), table.enc(pk[q], v)))

    initiation = table.enc(pk["b"], table.pair(
        ids["a"], table.nonce(table.eps(), ids["a"])))
    queries = (
        ("responder-nonce-secrecy", table.nonce(initiation, ids["b"])),
        ("initiator-key-secrecy", sk["a"]),
    )
    facts = [("o", ids[p]) for p in _EVERYONE]
    facts.append(("o", sk["o"]))
    facts.extend(("o", pk[p]) for p in _EVERYONE)
    return ProtocolSpec(
        name=name,
        principals=(Principal("a", PrincipalKind.HONEST),
                    Principal("b", PrincipalKind.HONEST),
                    Principal("o", PrincipalKind.ADVERSARY)),
        atoms=(),
        keypairs=_EVERYONE,
        initial_facts=tuple(facts),
        families=tuple(families),
        primitives=("enc", "nonce", "pair", "rule"),
        queries=queries,
        table=table)


def builtin_protocols(table: Optional[TermTable] = None) -> Dict[str, ProtocolSpec]:
    table = table or DEFAULT_TABLE
    return {"ns": _builtin("ns", False, table),
            "ns-lowe": _builtin("ns-lowe", True, table)}


# -- primitive-spec files ----------------------------------------------


def _int(parser: "_Parser", node) -> Optional[int]:
    if isinstance(node, sexpr.Sym) and node.text.isdigit():
        return int(node.text)
    parser.errors.append((node.line, node.col, "expected a position number"))
    return None


def parse_primitive_specs(text: str,
                          table: Optional[TermTable] = None
                          ) -> Tuple[PrimitiveSpec, ...]:
    """Read one or more (primitive-spec ...) forms.

    Shape: (primitive-spec name (schema term+) (composing i*) (decomposing i*)
    (requires (i (j*))*) with optional (principal name) and
    (rule-names (i name)*). Any bare symbol in a schema term is an atom."""
    table = table or DEFAULT_TABLE
    forms = sexpr.read_all(text)
    if not forms:
        raise ParseError([(1, 1, "missing primitive-spec form")])
    parser = _Parser(table)
    out = []
    for form in forms:
        spec = _one_primitive_spec(parser, form, table)
        if spec is not None:
            out.append(spec)
    if parser.errors:
        raise ParseError(sorted(set(parser.errors)))
    return tuple(out)


def _schema_term(parser: _Parser, node, table: TermTable) -> Optional[Term]:
    """Like _Parser.term but with no declaration scope: symbols are atoms."""
    if isinstance(node, sexpr.Sym):
        if node.text == "eps":
            return table.eps()
        return table.atom(node.text)
    head = node.head()
    args = node.items[1:]
    if head in (IDENT, VAR):
        if len(args) != 1 or not isinstance(args[0], sexpr.Sym):
            parser.err(node, "(%s name) takes one name" % head)
            return None
        return table.intern(head, args[0].text)
    if head in CONSTRUCTOR_TAGS:
        want = 1 if head in _UNARY_TAGS else 2
        if len(args) != want:
            parser.err(node, "(%s ...) takes %d argument(s)" % (head, want))
            return None
        kids = [_schema_term(parser, a, table) for a in args]
        if any(k is None for k in kids):
            return None
        try:
            return table.intern(head, children=tuple(kids))
        except TermError as exc:
            parser.err(node, str(exc))
            return None
    parser.err(node, "unknown term form %r" % head)
    return None


def _one_primitive_spec(parser: _Parser, form, table) -> Optional[PrimitiveSpec]:
    if not isinstance(form, sexpr.SList) or form.head() != "primitive-spec":
        parser.err(form, "expected a primitive-spec form")
        return None
    if len(form) < 2 or not isinstance(form[1], sexpr.Sym):
        parser.err(form, "primitive-spec needs a name")
        return None
    name = form[1].text
    schema: List[Term] = []
    composing: List[int] = []
    decomposing: List[int] = []
    premises: Dict[int, frozenset] = {}
    rule_names: Dict[int, str] = {}
    principal = name
    seen = set()
    for part in form.items[2:]:
        if not isinstance(part, sexpr.SList) or part.head() is None:
            parser.err(part, "expected a primitive-spec section")
            return None
        head = part.head()
        if head in seen:
            parser.err(part, "duplicate %s section" % head)
            return None
        seen.add(head)
        if head == "schema":
            for item in part.items[1:]:
                built = _schema_term(parser, item, table)
                if built is None:
                    return None
                schema.append(built)
        elif head in ("composing", "decomposing"):
            for item in part.items[1:]:
                i = _int(parser, item)
                if i is None:
                    return None
                (composing if head == "composing" else decomposing).append(i)
        elif head == "requires":
            for item in part.items[1:]:
                if (not isinstance(item, sexpr.SList) or len(item) != 2
                        or not isinstance(item[1], sexpr.SList)):
                    parser.err(item, "expected (position (premises...))")
                    return None
                i = _int(parser, item[0])
                if i is None:
                    return None
                js = [_int(parser, j) for j in item[1].items]
                if any(j is None for j in js):
                    return None
                premises[i] = frozenset(js)
        elif head == "principal":
            if len(part) != 2 or not isinstance(part[1], sexpr.Sym):
                parser.err(part, "(principal name) takes one name")
                return None
            principal = part[1].text
        elif head == "rule-names":
            for item in part.items[1:]:
                if (not isinstance(item, sexpr.SList) or len(item) != 2
                        or not isinstance(item[1], sexpr.Sym)):
                    parser.err(item, "expected (position name)")
                    return None
                i = _int(parser, item[0])
                if i is None:
                    return None
                rule_names[i] = item[1].text
        else:
            parser.err(part, "unknown primitive-spec section %r" % head)
            return None
    try:
        return PrimitiveSpec(
            name=name, principal=principal, arity=len(schema),
            schema=tuple(schema), composing=frozenset(composing),
            decomposing=frozenset(decomposing), premises=premises,
            rule_names=rule_names)
    except ValidationError as exc:
        parser.err(form, str(exc))
        return None
