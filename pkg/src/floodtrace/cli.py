"""Command-line client.

Talks to a running service when ``--server`` (or ``FLOODTRACE_SERVER``) is
set, otherwise hosts the same app in-process. Exit codes: 0 success,
2 scenario parse/validation failure, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path
from typing import Optional

from .metrics import comparison_csv, series_csv, table_csv
from .runner import dumps_report

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class _Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _client(server: Optional[str]):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette warns about its httpx backend on import
        from fastapi.testclient import TestClient

    from .api import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _read_scenario(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Failure(EXIT_INVALID, f"cannot read scenario {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise _Failure(EXIT_INVALID, f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise _Failure(EXIT_INVALID, f"{path}: top level must be a JSON object")
    return data


def _call(client, method: str, url: str, payload: Optional[dict] = None):
    try:
        resp = client.request(method, url, json=payload)
    except Exception as exc:  # connection errors from httpx
        raise _Failure(EXIT_RUNTIME, f"request failed: {exc}") from None
    if resp.status_code == 422:
        body = resp.json()
        lines = [f"invalid: {body.get('message', body)}"]
        for err in body.get("errors", []) or []:
            lines.append(f"  {err.get('field') or '<root>'} [{err.get('constraint')}] {err.get('message')}")
        raise _Failure(EXIT_INVALID, "\n".join(lines))
    if resp.status_code >= 400:
        try:
            body = resp.json()
            msg = f"{body.get('error', 'error')}: {body.get('message', body)}"
        except ValueError:
            msg = resp.text or f"HTTP {resp.status_code}"
        raise _Failure(EXIT_RUNTIME, msg)
    return resp


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise _Failure(EXIT_INVALID, f"not a number: {text!r}") from None


def cmd_validate(args, client) -> None:
    data = _read_scenario(args.scenario)
    resp = _call(client, "POST", "/scenarios/validate", {"scenario": data})
    sys.stdout.write(json.dumps(resp.json()["scenario"], indent=2, sort_keys=True) + "\n")


def cmd_run(args, client) -> None:
    data = _read_scenario(args.scenario)
    resp = _call(client, "POST", "/runs", {"scenario": data, "seed": args.seed})
    report = resp.json()["report"]
    if args.format == "json":
        _emit(dumps_report(report) + "\n", args.out)
        return
    _emit(series_csv(report), args.out)
    comparison = comparison_csv(report)
    if args.out:
        out = Path(args.out)
        out.with_name(out.stem + ".comparison.csv").write_text(comparison, encoding="utf-8")
    else:
        sys.stdout.write("\n" + comparison)


def cmd_sweep(args, client) -> None:
    data = _read_scenario(args.scenario)
    values = [_number(v) for v in args.values.split(",") if v.strip()]
    payload = {"scenario": data, "axis": args.axis, "values": values, "jobs": args.jobs}
    body = _call(client, "POST", "/sweeps", payload).json()
    if args.format == "csv":
        _emit(table_csv(body["table"]), args.out)
    else:
        _emit(json.dumps(body, sort_keys=True, separators=(",", ":")) + "\n", args.out)


def cmd_serve(args) -> None:
    import uvicorn

    uvicorn.run("floodtrace.api:app", host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="floodtrace", description="Botnet flood / honeypot traceback simulator")
    p.add_argument("--server", default=os.environ.get("FLOODTRACE_SERVER"),
                   help="base URL of a running service (default: in-process)")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--format", choices=["json", "csv"], default="json")

    sw = sub.add_parser("sweep", help="run a scenario once per value of a numeric parameter")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--axis", required=True, help="dotted parameter path, e.g. ppm.probability")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out")
    sw.add_argument("--format", choices=["json", "csv"], default="json")

    val = sub.add_parser("validate", help="load and validate a scenario without running it")
    val.add_argument("--scenario", required=True)

    srv = sub.add_parser("serve", help="start the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        cmd_serve(args)
        return EXIT_OK
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate}
    try:
        with _client(args.server) as client:
            handlers[args.command](args, client)
    except _Failure as exc:
        print(exc, file=sys.stderr)
        return exc.code
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
