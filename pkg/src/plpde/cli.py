"""Thin command-line client of the solve service.

The CLI never computes: it ships the run configuration to the service
(an in-process application instance by default, a remote base URL with
``--server``), writes the returned files into the output directory, and
maps the run status onto the exit-code contract:

    0   converged / condition passes / generated / verified
    1   configuration error (the diagnostic names the offending field)
    2   solver stall or inconclusive probe (partial outputs are written)
    3   rank condition fails

Diagnostics go to standard error as one JSON object per line.
"""

from __future__ import annotations

import argparse
import asyncio
import base64
import json
import sys
from pathlib import Path

import httpx


def _diag(level: str, **fields) -> None:
    print(json.dumps({"level": level, **fields}, sort_keys=True), file=sys.stderr)


async def _post_inprocess(path: str, payload: dict) -> httpx.Response:
    from .service import app

    transport = httpx.ASGITransport(app=app)
    async with httpx.AsyncClient(transport=transport, base_url="http://plpde.internal",
                                 timeout=None) as client:
        return await client.post(path, json=payload)


def _post(path: str, payload: dict, server: str | None) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)
    return asyncio.run(_post_inprocess(path, payload))


def _load_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        _diag("error", message=f"cannot read config: {err}", path=path)
        raise SystemExit(1) from err


def _handle_response(resp: httpx.Response, outdir: Path | None) -> int:
    if resp.status_code == 422:
        detail = resp.json().get("detail", [])
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            _diag("error", message=item.get("msg", "invalid"), field_path=loc)
        return 1
    if resp.status_code != 200:
        _diag("error", message=f"service returned HTTP {resp.status_code}")
        return 1
    body = resp.json()
    if body.get("error"):
        _diag("error", **body["error"])
    if outdir is not None and body.get("files"):
        outdir.mkdir(parents=True, exist_ok=True)
        for name, b64 in body["files"].items():
            (outdir / name).write_bytes(base64.b64decode(b64))
        _diag("info", message="outputs written", directory=str(outdir),
              files=sorted(body["files"]))
    _diag("info", status=body.get("status"), exit_code=body.get("exit_code"))
    return int(body.get("exit_code", 1))


def _outdir(args, config: dict | None) -> Path:
    if args.output_dir:
        return Path(args.output_dir)
    if config:
        return Path(config.get("output", {}).get("directory", "plpde_out"))
    return Path("plpde_out")


def cmd_solve(args) -> int:
    config = _load_config(args.config)
    resp = _post("/solve", config, args.server)
    return _handle_response(resp, _outdir(args, config))


def cmd_probe_cone(args) -> int:
    config = _load_config(args.config)
    resp = _post("/probe-cone", config, args.server)
    return _handle_response(resp, _outdir(args, config))


def cmd_mms(args) -> int:
    config = _load_config(args.config)
    resp = _post("/mms", config, args.server)
    return _handle_response(resp, _outdir(args, config))


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def cmd_verify_estimates(args) -> int:
    soldir = Path(args.solution_dir)
    try:
        manifest = json.loads((soldir / "manifest.json").read_text())
        fields = {}
        for name in ("solution.json", "solution.f64"):
            fields[name] = base64.b64encode((soldir / name).read_bytes()).decode()
    except OSError as err:
        _diag("error", message=f"cannot read solution directory: {err}")
        return 1
    resp = _post("/verify-estimates", {"manifest": manifest, "fields": fields}, args.server)
    outdir = Path(args.output_dir) if args.output_dir else soldir
    return _handle_response(resp, outdir)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plpde",
        description="Solve and probe fully nonlinear equations of partial-Laplacian "
                    "type on flat Hermitian models (thin client over the plpde service).",
        epilog="Exit codes: 0 success/converged, 1 configuration error, "
               "2 stall or inconclusive probe, 3 rank condition fails. "
               "PLPDE_THREADS caps worker parallelism.",
    )
    parser.add_argument("--server", default=None,
                        help="base URL of a running service; defaults to in-process execution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run a solve described by a JSON config")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("probe-cone", help="rank-condition certificate for the operator")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=cmd_probe_cone)

    p = sub.add_parser("mms", help="emit a manufactured instance (psi and exact solution)")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("verify-estimates", help="re-measure estimate ratios of a stored solution")
    p.add_argument("solution_dir")
    p.add_argument("-o", "--output-dir", default=None)
    p.set_defaults(func=cmd_verify_estimates)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8732)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except httpx.HTTPError as err:
        _diag("error", message=f"transport failure: {err}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
