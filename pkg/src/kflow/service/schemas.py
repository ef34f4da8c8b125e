"""Request and response bodies for the HTTP service."""

from typing import Dict, List, Optional

from pydantic import BaseModel


class BoundsModel(BaseModel):
    depth: int = 6
    rounds: int = 4
    synth_depth: int = 8


class HealthResponse(BaseModel):
    status: str
    version: str


class ParseRequest(BaseModel):
    text: str


class ProtocolSummary(BaseModel):
    name: str
    principals: List[Dict[str, str]]
    atoms: List[str]
    keypairs: List[str]
    primitives: List[str]
    families: List[dict]
    queries: List[str]
    pretty: str


class ProtocolList(BaseModel):
    protocols: List[str]


class CheckRequest(BaseModel):
    protocol: str            # builtin name, or full protocol source text
    query: str
    bounds: BoundsModel = BoundsModel()
    drop_rules: List[str] = []
    instrument: bool = False


class CheckResponse(BaseModel):
    protocol: str
    query: str
    verdict: dict
    trace: List[str]


class TraceRequest(BaseModel):
    protocol: str
    query: str
    bounds: BoundsModel = BoundsModel()


class TraceResponse(BaseModel):
    protocol: str
    query: str
    status: str
    replayed: Optional[bool] = None
    trace: List[str]


class OracleRequest(BaseModel):
    protocol: Optional[str] = None   # omitted: run the randomized suite
    query: Optional[str] = None      # restrict the protocol mode to one query
    cases: int = 100
    seed: int = 7
    bounds: Optional[BoundsModel] = None
    drop_rules: List[str] = []
    instrument: bool = False
    universe_cap: Optional[int] = None


class OracleResponse(BaseModel):
    matched: bool
    report: dict


class AxiomsRequest(BaseModel):
    specs: Optional[str] = None      # primitive-spec source; omitted: builtins
    atoms: List[str] = ["m1", "m2"]
    depth: int = 2
    universe_cap: Optional[int] = None


class AxiomsResponse(BaseModel):
    ok: bool
    results: List[dict]
    global_collision_freeness: dict
    strata_agreement: dict
    compose_decompose: dict
    strata_sample: dict
    fixed_sets: List[dict]
