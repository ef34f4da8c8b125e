"""Command-line front end.

Each command is a thin client over the HTTP service: by default the app is
driven in-process through an ASGI transport, and --server points the same
commands at a remote instance instead. Exit codes: 0 the property held
(secure, matched, or all axioms passed), 1 the property failed with
evidence printed, 2 usage, validation, or resource errors.
"""

import json
import os
import sys
from typing import Optional

import click
import httpx

from .service.app import app as service_app

EXIT_HELD = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    return httpx.Client(transport=httpx.ASGITransport(app=service_app),
                        base_url="http://kflow.internal", timeout=600.0)


def _color_on() -> bool:
    return os.environ.get("KFLOW_COLOR", "") != "0" and sys.stdout.isatty()


def _emph(text: str, color: str) -> str:
    if _color_on():
        return click.style(text, fg=color, bold=True)
    return text


def _protocol_payload(protocol: str) -> str:
    """A builtin name passes through; an existing path is read as source."""
    if os.path.exists(protocol):
        with open(protocol, "r", encoding="utf-8") as fh:
            return fh.read()
    return protocol


def _fail_http(resp: httpx.Response):
    try:
        detail = resp.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, dict):
        if detail.get("kind") == "parse-error":
            for err in detail.get("errors", []):
                click.echo("%d:%d: %s" % (err.get("line", 0),
                                          err.get("column", 0),
                                          err.get("message", "")), err=True)
        else:
            click.echo(str(detail.get("message", detail)), err=True)
    else:
        click.echo("request failed with status %d" % resp.status_code,
                   err=True)
    sys.exit(EXIT_ERROR)


def _post(server: Optional[str], path: str, payload: dict) -> dict:
    try:
        with _client(server) as client:
            resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        click.echo("cannot reach server: %s" % exc, err=True)
        sys.exit(EXIT_ERROR)
    if resp.status_code != 200:
        _fail_http(resp)
    return resp.json()


def _bounds_payload(depth, rounds, synth_depth) -> dict:
    out = {}
    if depth is not None:
        out["depth"] = depth
    if rounds is not None:
        out["rounds"] = rounds
    if synth_depth is not None:
        out["synth_depth"] = synth_depth
    return out


_bounds_options = [
    click.option("--depth", type=int, default=None,
                 help="Maximum term depth."),
    click.option("--rounds", type=int, default=None,
                 help="Maximum protocol rounds."),
    click.option("--synth-depth", type=int, default=None,
                 help="Maximum synthesis recursion depth."),
]


def _with_bounds(cmd):
    for opt in reversed(_bounds_options):
        cmd = opt(cmd)
    return cmd


@click.group()
@click.version_option(package_name="kflow")
def main():
    """Bounded secrecy checking for knowledge-flow protocol models."""


@main.command()
@click.argument("protocol")
@click.argument("query")
@_with_bounds
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text", help="Report format.")
@click.option("--server", default=None, help="Remote service URL.")
@click.option("--inject-drop-rule", "drop_rules", multiple=True, hidden=True)
def check(protocol, query, depth, rounds, synth_depth, fmt, server,
          drop_rules):
    """Check one secrecy query; exit 1 with a trace when an attack exists."""
    payload = {"protocol": _protocol_payload(protocol), "query": query,
               "drop_rules": list(drop_rules)}
    bounds = _bounds_payload(depth, rounds, synth_depth)
    if bounds:
        payload["bounds"] = bounds
    report = _post(server, "/check", payload)
    if fmt == "json":
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    else:
        verdict = report["verdict"]
        click.echo("protocol %s, query %s" % (report["protocol"],
                                              report["query"]))
        b = verdict["bounds"]
        status = verdict["status"]
        color = "red" if status == "attack-found" else "green"
        click.echo("verdict: %s (depth %d, rounds %d, synth %d)"
                   % (_emph(status, color), b["depth"], b["rounds"],
                      b["synth_depth"]))
        for line in report["trace"]:
            click.echo(line)
    sys.exit(EXIT_FAILED if report["verdict"]["status"] == "attack-found"
             else EXIT_HELD)


@main.command()
@click.argument("protocol")
@click.argument("query")
@_with_bounds
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text", help="Report format.")
@click.option("--server", default=None, help="Remote service URL.")
def trace(protocol, query, depth, rounds, synth_depth, fmt, server):
    """Print the attack narrative for a query, re-validated step by step."""
    payload = {"protocol": _protocol_payload(protocol), "query": query}
    bounds = _bounds_payload(depth, rounds, synth_depth)
    if bounds:
        payload["bounds"] = bounds
    report = _post(server, "/trace", payload)
    if fmt == "json":
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    elif report["status"] != "attack-found":
        click.echo("no attack at these bounds; nothing to trace")
    else:
        for line in report["trace"]:
            click.echo(line)
        if not report.get("replayed", False):
            click.echo(_emph("warning: trace failed replay", "red"), err=True)
    sys.exit(EXIT_FAILED if report["status"] == "attack-found" else EXIT_HELD)


@main.command()
@click.argument("protocol", required=False)
@click.option("--query", default=None,
              help="Compare only this query (protocol mode).")
@click.option("--random", "cases", type=int, default=None,
              help="Run N randomized protocols instead of a fixed one.")
@click.option("--seed", type=int, default=7, help="Suite seed.")
@_with_bounds
@click.option("--universe-cap", type=int, default=None,
              help="Abort saturation beyond this many terms.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text", help="Report format.")
@click.option("--server", default=None, help="Remote service URL.")
@click.option("--inject-drop-rule", "drop_rules", multiple=True, hidden=True)
def oracle(protocol, query, cases, seed, depth, rounds, synth_depth,
           universe_cap, fmt, server, drop_rules):
    """Cross-check the search engine against naive saturation."""
    if protocol is None and cases is None:
        cases = 100
    if protocol is not None and cases is not None:
        click.echo("give either a protocol or --random, not both", err=True)
        sys.exit(EXIT_ERROR)
    payload = {"seed": seed, "drop_rules": list(drop_rules)}
    if protocol is not None:
        payload["protocol"] = _protocol_payload(protocol)
        if query is not None:
            payload["query"] = query
        bounds = _bounds_payload(depth, rounds, synth_depth)
        if bounds:
            full = {"depth": 3, "rounds": 16, "synth_depth": 12}
            full.update(bounds)
            payload["bounds"] = full
        if universe_cap is not None:
            payload["universe_cap"] = universe_cap
    else:
        payload["cases"] = cases
    report = _post(server, "/oracle", payload)
    if fmt == "json":
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    else:
        body = report["report"]
        if protocol is None:
            click.echo("suite: %d protocols, %d targets, %d resamples"
                       % (body["cases"], body["targets_checked"],
                          body["resamples"]))
        else:
            click.echo("protocol %s: %d queries against %d saturated terms"
                       % (body["protocol"], len(body["queries"]),
                          body["oracle_size"]))
        if report["matched"]:
            click.echo("verdicts %s saturation membership"
                       % _emph("match", "green"))
        else:
            click.echo("verdicts %s saturation membership"
                       % _emph("DIFFER from", "red"))
            for m in body["mismatches"]:
                click.echo("  %s: engine says %s, oracle membership %s"
                           % (m.get("query", m.get("case", "?")),
                              m["engine_status"], m["in_oracle"]))
    sys.exit(EXIT_HELD if report["matched"] else EXIT_FAILED)


@main.command()
@click.argument("specfile", required=False,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--atoms", default="m1,m2",
              help="Comma-separated sample atoms.")
@click.option("--depth", type=int, default=1,
              help="Sample universe depth.")
@click.option("--universe-cap", type=int, default=None,
              help="Abort enumeration beyond this many terms.")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]),
              default="text", help="Report format.")
@click.option("--server", default=None, help="Remote service URL.")
def axioms(specfile, atoms, depth, universe_cap, fmt, server):
    """Validate primitive specs: collision-freeness, strata, fixed sets."""
    payload = {"atoms": [a for a in atoms.split(",") if a], "depth": depth}
    if specfile is not None:
        with open(specfile, "r", encoding="utf-8") as fh:
            payload["specs"] = fh.read()
    if universe_cap is not None:
        payload["universe_cap"] = universe_cap
    report = _post(server, "/axioms", payload)
    if fmt == "json":
        click.echo(json.dumps(report, indent=2, sort_keys=True))
    else:
        for entry in report["results"]:
            local = entry["local"]
            status = _emph("pass", "green") if local["pass"] \
                else _emph("FAIL", "red")
            click.echo("%s: %s" % (entry["name"], status))
            for v in local["violations"]:
                click.echo("  (%s) %s" % (v["condition"], v["message"]))
            cls = entry["classification"]
            if "error" in cls:
                click.echo("  classification: %s" % cls["error"])
            else:
                parts = []
                for pos, c in sorted(cls["positions"].items(),
                                     key=lambda kv: int(kv[0])):
                    label = c["kind"]
                    if c["controlling"] is not None:
                        label += " (controlled by %d)" % c["controlling"]
                    parts.append("%s: %s" % (pos, label))
                click.echo("  positions: " + "; ".join(parts))
        gcf = report["global_collision_freeness"]
        click.echo("global collision-freeness: %s"
                   % ("pass" if gcf["pass"] else "FAIL"))
        agree = report["strata_agreement"]
        click.echo("strata agreement: %d instances, %d violations"
                   % (agree["checked"], len(agree["violations"])))
        extract = report["compose_decompose"]
        click.echo("compose/decompose: %d instances, %d violations"
                   % (extract["checked"], len(extract["violations"])))
        for fs in report["fixed_sets"]:
            if fs["members"]:
                click.echo("fixed set for %s (owner %s): %s"
                           % (fs["primitive"], fs["owner"],
                              ", ".join(fs["members"])))
            else:
                click.echo("fixed set for %s: empty" % fs["primitive"])
    sys.exit(EXIT_HELD if report["ok"] else EXIT_FAILED)


@main.command()
@click.option("--host", default="127.0.0.1", help="Bind address.")
@click.option("--port", type=int, default=8000, help="Bind port.")
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run(service_app, host=host, port=port)


if __name__ == "__main__":
    main()
