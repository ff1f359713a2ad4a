"""Command-line driver: a thin client over the service endpoints.

By default requests run against the in-process app over an ASGI transport,
so `synth`/`eval`/`inspect` work with no server running; set
NERFSYNTH_SERVER=http://host:port to target a remote service instead.

Exit codes: 0 success, 1 run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import httpx

SERVER_ENV = "NERFSYNTH_SERVER"


def _client() -> httpx.Client:
    server = os.environ.get(SERVER_ENV)
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    # No server configured: drive the in-process app over its ASGI interface.
    from fastapi.testclient import TestClient

    from .service.app import build_app

    return TestClient(build_app())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nerfsynth",
        description="Synthesize trainable NeRF plugin repositories from papers, "
                    "benchmark the results, and inspect artifacts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser(
        "synth", help="synthesize a plugin repository from a paper",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    synth.add_argument("--paper", required=True, help="paper markdown path")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--llm", required=True, help="gateway config llm.json")
    synth.add_argument("--kb", default=None, help="knowledge base directory")
    synth.add_argument("--grammar", default=None, help="plugin grammar file (packaged default if omitted)")
    synth.add_argument("--citations", default=None, help="fixture citation graph.json")
    synth.add_argument("--sandbox", choices=["stub", "host"], default="stub", help="smoke-training sandbox")
    synth.add_argument("--smoke-iters", type=int, default=3000, help="smoke training iterations")
    synth.add_argument("--max-refine", type=int, default=5, help="visual refinement iteration budget")
    synth.add_argument("--psnr-target", type=float, default=None, help="evaluation PSNR target in dB")

    ev = sub.add_parser(
        "eval", help="run the benchmark harness over a manifest",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    ev.add_argument("--bench", required=True, help="benchmark manifest bench.json")
    ev.add_argument("--out", required=True, help="report output directory")
    ev.add_argument("--judgments", default=None, help="judgments fixture file or directory")
    ev.add_argument("--format", choices=["csv", "json"], default="csv", help="stdout rendering")

    ins = sub.add_parser(
        "inspect", help="validate and summarize a synthesized artifact",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    ins.add_argument("--out", required=True, help="artifact directory of a synth run")
    ins.add_argument("--grammar", default=None, help="grammar file (packaged default if omitted)")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8321)
    return parser


def _fail_usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def cmd_synth(args: argparse.Namespace) -> int:
    for label, value in (("--paper", args.paper), ("--llm", args.llm)):
        if not Path(value).is_file():
            return _fail_usage(f"{label} path does not exist: {value}")
    if args.kb and not Path(args.kb).is_dir():
        return _fail_usage(f"--kb directory does not exist: {args.kb}")
    if args.grammar and not Path(args.grammar).is_file():
        return _fail_usage(f"--grammar file does not exist: {args.grammar}")
    payload = {
        "paper": args.paper,
        "out": args.out,
        "llm": args.llm,
        "kb": args.kb,
        "grammar": args.grammar,
        "citations": args.citations,
        "sandbox": args.sandbox,
        "smoke_iters": args.smoke_iters,
        "max_refine": args.max_refine,
        "psnr_target": args.psnr_target,
    }
    with _client() as client:
        data = client.post("/synth", json=payload).json()
    if data["exit_code"] == 0:
        ladder = data.get("ladder") or {}
        print(f"repository: {data['repo_dir']}")
        print(f"ladder: {json.dumps(ladder)}")
        if data.get("refine_terminated_by"):
            print(f"refinement: {data['refine_iterations']} iterations ({data['refine_terminated_by']})")
    else:
        print(f"error: {data['message']}", file=sys.stderr)
        if data.get("events_path"):
            print(f"event log: {data['events_path']}", file=sys.stderr)
    return data["exit_code"]


def cmd_eval(args: argparse.Namespace) -> int:
    if not Path(args.bench).is_file():
        return _fail_usage(f"--bench manifest does not exist: {args.bench}")
    payload = {
        "bench": args.bench,
        "out": args.out,
        "judgments": args.judgments,
        "format": args.format,
    }
    with _client() as client:
        data = client.post("/eval", json=payload).json()
    if data["exit_code"] != 0:
        print(f"error: {data['message']}", file=sys.stderr)
        return data["exit_code"]
    if args.format == "json":
        print(json.dumps({"rows": data["rows"], "aggregate": data["aggregate"]}, indent=2, sort_keys=True))
    else:
        print(Path(data["csv_path"]).read_text(), end="")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    if not Path(args.out).is_dir():
        return _fail_usage(f"--out directory does not exist: {args.out}")
    payload = {"out": args.out, "grammar": args.grammar}
    with _client() as client:
        data = client.post("/inspect", json=payload).json()
    if data.get("valid") is None:
        print(f"error: {data['message']}", file=sys.stderr)
        return data["exit_code"]
    print(f"valid: {data['valid']}")
    for violation in data["violations"]:
        print(f"  {violation['file']}: {violation['rule']} ({violation['detail']})")
    print(f"files: {len(data['files'])}, events: {data['events']}")
    if data.get("ladder"):
        print(f"ladder: {json.dumps(data['ladder'])}")
    return data["exit_code"]


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import build_app

    uvicorn.run(build_app(), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"synth": cmd_synth, "eval": cmd_eval, "inspect": cmd_inspect, "serve": cmd_serve}
    try:
        return handlers[args.command](args)
    except httpx.HTTPError as exc:
        print(f"error: service unreachable: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
