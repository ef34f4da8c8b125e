"""Bounded secrecy checking for knowledge-flow protocol models.

Protocols are sets of principals exchanging terms under pattern rules.
The package models who-knows-what as ground facts, projects the system
onto the adversary, and answers secrecy queries two ways: a naive
saturation that serves as ground truth on small instances, and a
two-phase search engine (decomposition closure plus goal-directed
synthesis) that scales to real message spaces.
"""

from .errors import (
    KflowError,
    ParseError,
    ResourceError,
    TermError,
    ValidationError,
)
from .terms import (
    DEFAULT_TABLE,
    Term,
    TermTable,
    enumerate_universe,
    free_vars,
    from_sexpr,
    subterms,
    term_from_json,
    to_json_nodes,
    to_json_tree,
    to_sexpr,
)
from .knowledge import (
    MERGED_ADVERSARY,
    FixedSet,
    KnowledgeState,
    Principal,
    PrincipalKind,
    knowledge,
    merge,
    saturate_honest,
    source,
)
from .rules import (
    PatternRule,
    ProjectedRule,
    instantiate,
    match,
    match_all,
    project,
    resolve,
    restrict_RF,
    unify_all,
)
from .primitives import (
    Classification,
    PrimitiveSpec,
    builtin_specs,
    check_compose_decompose,
    check_global_cf,
    check_local_cf,
    check_strata_agreement,
    classify,
    fixed_set,
    strata,
)
from .engine import (
    Bounds,
    CompiledProtocol,
    ProofStep,
    RuleFamily,
    Verdict,
    analyze,
    derivable,
    f_step,
    g_step,
    render_trace,
    replay,
    saturate_naive,
    synthesize,
)
from .dsl import (
    ProtocolSpec,
    builtin_protocols,
    parse,
    parse_primitive_specs,
    pretty_print,
)

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "Classification",
    "CompiledProtocol",
    "DEFAULT_TABLE",
    "FixedSet",
    "KflowError",
    "KnowledgeState",
    "MERGED_ADVERSARY",
    "ParseError",
    "PatternRule",
    "PrimitiveSpec",
    "Principal",
    "PrincipalKind",
    "ProjectedRule",
    "ProofStep",
    "ProtocolSpec",
    "ResourceError",
    "RuleFamily",
    "Term",
    "TermError",
    "TermTable",
    "ValidationError",
    "Verdict",
    "analyze",
    "builtin_protocols",
    "builtin_specs",
    "check_compose_decompose",
    "check_global_cf",
    "check_local_cf",
    "check_strata_agreement",
    "classify",
    "derivable",
    "enumerate_universe",
    "f_step",
    "fixed_set",
    "free_vars",
    "from_sexpr",
    "g_step",
    "instantiate",
    "knowledge",
    "match",
    "match_all",
    "merge",
    "parse",
    "parse_primitive_specs",
    "pretty_print",
    "project",
    "render_trace",
    "replay",
    "resolve",
    "restrict_RF",
    "saturate_honest",
    "saturate_naive",
    "source",
    "strata",
    "subterms",
    "synthesize",
    "term_from_json",
    "to_json_nodes",
    "to_json_tree",
    "to_sexpr",
    "unify_all",
]
