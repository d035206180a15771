"""Command-line client for the vlptrack service.

Every subcommand is a thin wrapper over a service endpoint. By default
the requests go to an in-process application instance, so no server needs
to be running and all paths are local; point --server at a running
``vlptrack serve`` instance to drive a remote one instead (paths are then
interpreted on the server).

Exit code 0 means all requested work completed; anything else prints a
single machine-parsable ``error: ...`` line on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx


class ServiceClient:
    def __init__(self, server: str | None):
        self._server = server
        self._app = None
        if not server:
            from .service import create_app
            self._app = create_app()

    def _request(self, method: str, path: str, payload: dict | None):
        if self._server:
            with httpx.Client(base_url=self._server, timeout=3600.0) as client:
                return client.request(method, path, json=payload)

        async def go():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(transport=transport,
                                         base_url="http://vlptrack.local",
                                         timeout=None) as client:
                return await client.request(method, path, json=payload)

        return asyncio.run(go())

    def post(self, path: str, payload: dict) -> dict:
        return self._handle(self._request("POST", path, payload))

    def get(self, path: str) -> dict:
        return self._handle(self._request("GET", path, None))

    @staticmethod
    def _handle(response) -> dict:
        try:
            body = response.json()
        except ValueError:
            raise CliError(f"bad response ({response.status_code}) from service")
        if response.status_code != 200:
            detail = body.get("error") or body.get("detail") or str(body)
            if isinstance(detail, list):  # pydantic validation detail
                first = detail[0]
                detail = f"{'.'.join(str(x) for x in first['loc'])}: {first['msg']}"
            raise CliError(str(detail))
        return body


class CliError(Exception):
    pass


def _require_file(path: str, what: str) -> None:
    if not Path(path).is_file():
        raise CliError(f"{what} not found: {path}")


def _require_dir(path: str, what: str) -> None:
    if not Path(path).is_dir():
        raise CliError(f"{what} not found: {path}")


def cmd_simulate(args, client: ServiceClient) -> None:
    if not args.server:
        _require_file(args.config, "config file")
    payload = {"config_path": args.config, "out_dir": args.out}
    if args.seed is not None:
        payload["seed"] = args.seed
    body = client.post("/simulate", payload)
    if not args.quiet:
        print(f"wrote {body['frames_written']} frames to {body['out_dir']} "
              f"(ground truth: {body['groundtruth_path']})")


def cmd_track(args, client: ServiceClient) -> None:
    if not args.server:
        _require_file(args.config, "config file")
        _require_dir(args.frames, "frames directory")
    payload = {"config_path": args.config, "frames_dir": args.frames}
    if args.out:
        payload["out_path"] = args.out
    body = client.post("/track", payload)
    statuses = " ".join(f"{k}={v}" for k, v in sorted(body["status_counts"].items()))
    print(f"tracked {body['frames']} frames, mean proc_ms "
          f"{body['mean_proc_ms']:.3f}, {statuses} -> {body['fixes_path']}")


def cmd_bench(args, client: ServiceClient) -> None:
    if not args.server:
        _require_file(args.config, "config file")
        if args.scenarios:
            _require_file(args.scenarios, "scenario file")
    payload = {"config_path": args.config, "out_dir": args.out}
    if args.scenarios:
        payload["scenarios_path"] = args.scenarios
    body = client.post("/bench", payload)
    if not args.quiet:
        for row in body["comparison"]:
            print(json.dumps(row, sort_keys=True))
    if body["failures"]:
        for name, message in sorted(body["failures"].items()):
            print(f"error: scenario {name} failed: {message}", file=sys.stderr)
        raise CliError("one or more scenarios failed")
    if not args.quiet:
        print(f"report written to {body['out_dir']}")


def cmd_report(args, client: ServiceClient) -> None:
    if not args.server:
        _require_file(args.config, "config file")
        _require_file(args.fixes, "fixes file")
        _require_file(args.truth, "ground-truth file")
    body = client.post("/report", {
        "config_path": args.config,
        "fixes_path": args.fixes,
        "groundtruth_path": args.truth,
        "out_dir": args.out,
    })
    if not args.quiet:
        print(f"report written to {body['out_dir']} "
              f"({len(body['files'])} files)")


def cmd_serve(args, _client=None) -> None:
    import uvicorn

    from .service import create_app
    uvicorn.run(create_app(), host=args.host, port=args.port,
                log_level="warning" if args.quiet else "info")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlptrack",
        description="Visible-light positioning: simulate scenes, track "
                    "lamps, run benchmarks, and build reports.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", metavar="URL", default=None,
                        help="service URL; default runs in-process")
    common.add_argument("--quiet", action="store_true",
                        help="suppress non-essential output")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=lambda **kw: argparse.ArgumentParser(
                                    parents=[common], **kw))

    p = sub.add_parser("simulate", help="render a scene to PGM frames")
    p.add_argument("--config", required=True, help="scene/tracker config JSON")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--seed", type=int, default=None, help="override scene seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run the tracking pipeline over frames")
    p.add_argument("--config", required=True)
    p.add_argument("--frames", required=True, help="directory of frame_*.pgm")
    p.add_argument("--out", default=None, help="fixes.jsonl path")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("bench", help="run benchmark scenarios")
    p.add_argument("--config", required=True)
    p.add_argument("--scenarios", default=None, help="scenario spec JSON")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="score a fixes file against ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--fixes", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            cmd_serve(args)
        else:
            args.func(args, ServiceClient(args.server))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
