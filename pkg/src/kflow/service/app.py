"""HTTP face of the checker.

Every analysis the package can run is reachable here: parsing protocol
text, secrecy checks with counterexample traces, engine-versus-saturation
comparison, and primitive-spec validation. Domain errors surface as 400s
with structured detail; unknown builtin names as 404s.
"""

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..dsl import (
    ProtocolSpec,
    builtin_protocols,
    parse,
    parse_primitive_specs,
    pretty_print,
)
from ..engine import Bounds, derivable, render_trace, replay, saturate_naive
from ..errors import ParseError, ResourceError, TermError, ValidationError
from ..primitives import (
    builtin_specs,
    check_compose_decompose,
    check_global_cf,
    check_local_cf,
    check_strata_agreement,
    classify,
    fixed_set,
    strata,
)
from ..suite import run_suite
from ..terms import (
    ATOM,
    EPS,
    IDENT,
    VAR,
    DEFAULT_TABLE,
    enumerate_universe,
    subterms,
    to_sexpr,
)
from .schemas import (
    AxiomsRequest,
    AxiomsResponse,
    BoundsModel,
    CheckRequest,
    CheckResponse,
    HealthResponse,
    OracleRequest,
    OracleResponse,
    ParseRequest,
    ProtocolList,
    ProtocolSummary,
    TraceRequest,
    TraceResponse,
)

app = FastAPI(title="kflow", version=__version__)


@app.exception_handler(ParseError)
async def parse_error(request: Request, exc: ParseError):
    return JSONResponse(status_code=400, content={"detail": {
        "kind": "parse-error",
        "errors": [{"line": l, "column": c, "message": m}
                   for l, c, m in exc.errors],
    }})


@app.exception_handler(ValidationError)
async def validation_error(request: Request, exc: ValidationError):
    return JSONResponse(status_code=400, content={"detail": {
        "kind": "validation-error", "message": str(exc)}})


@app.exception_handler(TermError)
async def term_error(request: Request, exc: TermError):
    return JSONResponse(status_code=400, content={"detail": {
        "kind": "term-error", "message": str(exc)}})


@app.exception_handler(ResourceError)
async def resource_error(request: Request, exc: ResourceError):
    return JSONResponse(status_code=400, content={"detail": {
        "kind": "resource-error", "message": str(exc),
        "count": exc.count, "cap": exc.cap}})


def _bounds(model: BoundsModel) -> Bounds:
    return Bounds(max_term_depth=model.depth, max_rounds=model.rounds,
                  max_synthesis_depth=model.synth_depth)


def _load_spec(protocol: str) -> ProtocolSpec:
    if protocol.lstrip().startswith("("):
        return parse(protocol)
    builtins = builtin_protocols()
    if protocol not in builtins:
        raise ValidationError(
            "unknown protocol %r; builtins are %s"
            % (protocol, ", ".join(sorted(builtins))))
    return builtins[protocol]


def _summary(spec: ProtocolSpec) -> ProtocolSummary:
    return ProtocolSummary(
        name=spec.name,
        principals=[{"name": p.name, "kind": p.kind.value}
                    for p in spec.principals],
        atoms=list(spec.atoms),
        keypairs=list(spec.keypairs),
        primitives=list(spec.primitives),
        families=[f.to_json() for f in spec.families],
        queries=[q for q, _ in spec.queries],
        pretty=pretty_print(spec))


@app.get("/health", response_model=HealthResponse)
def health():
    return HealthResponse(status="ok", version=__version__)


@app.get("/protocols", response_model=ProtocolList)
def protocols():
    return ProtocolList(protocols=sorted(builtin_protocols()))


@app.get("/protocols/{name}", response_model=ProtocolSummary)
def protocol_detail(name: str):
    builtins = builtin_protocols()
    if name not in builtins:
        return JSONResponse(status_code=404, content={"detail": {
            "kind": "not-found", "message": "no builtin protocol %r" % name}})
    return _summary(builtins[name])


@app.post("/parse", response_model=ProtocolSummary)
def parse_protocol(req: ParseRequest):
    return _summary(parse(req.text))


@app.post("/check", response_model=CheckResponse)
def check(req: CheckRequest):
    spec = _load_spec(req.protocol)
    target = spec.query(req.query)
    verdict = derivable(target, spec.compile(), _bounds(req.bounds),
                        instrument=req.instrument,
                        drop_rules=tuple(req.drop_rules))
    trace = render_trace(verdict.proof) if verdict.proof is not None else []
    return CheckResponse(protocol=spec.name, query=req.query,
                         verdict=verdict.to_json(), trace=trace)


@app.post("/trace", response_model=TraceResponse)
def trace(req: TraceRequest):
    spec = _load_spec(req.protocol)
    target = spec.query(req.query)
    proto = spec.compile()
    verdict = derivable(target, proto, _bounds(req.bounds))
    if verdict.proof is None:
        return TraceResponse(protocol=spec.name, query=req.query,
                             status=verdict.status, trace=[])
    return TraceResponse(protocol=spec.name, query=req.query,
                         status=verdict.status,
                         replayed=replay(verdict.proof, proto),
                         trace=render_trace(verdict.proof))


@app.post("/oracle", response_model=OracleResponse)
def oracle(req: OracleRequest):
    if req.protocol is None:
        report = run_suite(req.seed, req.cases,
                           drop_rules=tuple(req.drop_rules),
                           instrument=req.instrument)
        return OracleResponse(matched=report.matched, report=report.to_json())

    spec = _load_spec(req.protocol)
    if not spec.queries:
        raise ValidationError(
            "protocol %r declares no queries to compare on" % spec.name)
    names = [q for q, _ in spec.queries]
    if req.query is not None:
        if req.query not in names:
            raise ValidationError(
                "protocol %r has no query %r" % (spec.name, req.query))
        names = [req.query]
    bounds = _bounds(req.bounds) if req.bounds is not None else \
        Bounds(max_term_depth=3, max_rounds=16, max_synthesis_depth=12)
    proto = spec.compile()
    kwargs = {}
    if req.universe_cap is not None:
        kwargs["universe_cap"] = req.universe_cap
    members = saturate_naive(proto.initial, proto.oracle_rules(), bounds,
                             **kwargs)
    mismatches = []
    for qname in names:
        target = spec.query(qname)
        verdict = derivable(target, proto, bounds,
                            drop_rules=tuple(req.drop_rules))
        expected = target in members
        if verdict.attack_found != expected:
            mismatches.append({
                "query": qname, "target": to_sexpr(target),
                "in_oracle": expected, "engine_status": verdict.status})
    return OracleResponse(matched=not mismatches, report={
        "protocol": spec.name,
        "bounds": bounds.to_json(),
        "oracle_size": len(members),
        "queries": names,
        "mismatches": mismatches})


def _sample_universe(specs, atom_names, depth, cap):
    """Ground sample for exhaustive spec checks: the requested atoms, any
    identities the schemas mention, and every constructor they use."""
    table = DEFAULT_TABLE
    leaves = {table.atom(a) for a in atom_names}
    tags = set()
    for spec in specs:
        for pat in spec.schema:
            for sub in subterms(pat):
                if sub.tag in (ATOM, EPS, IDENT, VAR):
                    if sub.tag == IDENT:
                        leaves.add(sub)
                else:
                    tags.add(sub.tag)
    leaves.add(table.eps())
    kwargs = {"cap": cap} if cap is not None else {}
    return enumerate_universe(sorted(leaves), sorted(tags), depth, **kwargs)


@app.post("/axioms", response_model=AxiomsResponse)
def axioms(req: AxiomsRequest):
    if req.specs is None:
        specs = builtin_specs()
    else:
        specs = parse_primitive_specs(req.specs)
        if not specs:
            raise ValidationError("no primitive-spec forms in input")
    universe = _sample_universe(specs, req.atoms, req.depth, req.universe_cap)

    ok = True
    results = []
    for spec in specs:
        local = check_local_cf(spec, universe)
        ok = ok and local.passed
        try:
            table = {str(i): {"kind": c.kind, "controlling": c.controlling}
                     for i, c in sorted(classify(spec).items())}
            classification = {"positions": table}
        except ValidationError as exc:
            classification = {"error": str(exc)}
            ok = False
        results.append({"name": spec.name, "local": local.to_json(),
                        "classification": classification})

    global_cf = check_global_cf(specs)
    agreement = check_strata_agreement(universe, specs)
    extraction = check_compose_decompose(universe, specs)
    ok = ok and global_cf.passed and not agreement["violations"] \
        and not extraction["violations"]

    fixed = []
    for spec in specs:
        fs = fixed_set(universe, spec)
        fixed.append({"primitive": spec.name, "owner": fs.owner,
                      "members": [to_sexpr(t) for t in sorted(fs.members)]})
        ok = ok and not fs.members

    sm = strata(universe, specs)
    sample = {to_sexpr(t): lvl for t, lvl in
              sorted(sm.levels.items())[:40]}

    return AxiomsResponse(
        ok=ok,
        results=results,
        global_collision_freeness=global_cf.to_json(),
        strata_agreement=agreement,
        compose_decompose=extraction,
        strata_sample={"levels": sample,
                       "excluded": [to_sexpr(t)
                                    for t in sorted(sm.excluded)[:40]]},
        fixed_sets=fixed)
