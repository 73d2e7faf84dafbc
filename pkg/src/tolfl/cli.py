"""Command line front end.

Subcommands: run (one config), suite (preset comparison over the four
protocols), report (aggregate a trace directory), serve (start the HTTP
service). By default everything executes in process; --server URL sends the
same request to a running service instead.

Exit codes: 0 success, 1 execution failure, 2 bad arguments or config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from typing import Dict, List, Optional, Sequence

import httpx

from .config import ConfigError, parse_config
from .experiments import (
    OUT_DIR_ENV,
    SUITE_PRESETS,
    ExperimentError,
    execute,
    report,
    resolve_out_dir,
    run_suite,
)


class CliError(RuntimeError):
    """Execution failed; message already suitable for stderr."""


def _make_client(server: str) -> httpx.Client:
    return httpx.Client(base_url=server, timeout=600.0)


def _post(server: str, path: str, payload: Dict) -> Dict:
    try:
        with _make_client(server) as client:
            resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise CliError(f"cannot reach {server}: {exc}") from None
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise CliError(f"server returned {resp.status_code}: {detail}")
    return resp.json()


def _fmt_row(row: Dict) -> str:
    return (
        f"{row['method']:>6}  {row['dataset']}  {row['scenario']}  "
        f"auroc {row['mean']:.4f} +/- {row['std']:.4f}  ({row['runs']} runs)"
    )


def _row_dicts(rows) -> List[Dict]:
    return [r if isinstance(r, dict) else dataclasses.asdict(r) for r in rows]


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        text = open(args.config, encoding="utf-8").read()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    if args.server:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            print(f"config is not valid JSON: {exc}", file=sys.stderr)
            return 2
        body = _post(args.server, "/runs", {"config": raw, "out_dir": args.out})
        rows = [body["row"]]
        files = {
            "summary": body["summary_file"],
            "provenance": body["provenance_file"],
        }
        n_traces = len(body["trace_files"])
    else:
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        result = execute(cfg, resolve_out_dir(args.out))
        rows = _row_dicts([result.row])
        files = {"summary": result.summary_path, "provenance": result.provenance_path}
        n_traces = len(result.trace_paths)

    for row in rows:
        print(_fmt_row(row))
    print(f"traces: {n_traces} file(s)")
    print(f"summary: {files['summary']}")
    print(f"provenance: {files['provenance']}")
    return 0


def _suite_overrides(args: argparse.Namespace) -> Dict:
    pairs = (
        ("N", args.N),
        ("k", args.k),
        ("epochs", args.epochs),
        ("seed", args.seed),
        ("repetitions", args.repetitions),
        ("samples_per_class", args.samples_per_class),
        ("alpha", args.alpha),
    )
    return {name: value for name, value in pairs if value is not None}


def _cmd_suite(args: argparse.Namespace) -> int:
    overrides = _suite_overrides(args)
    if args.server:
        body = _post(
            args.server, "/suites", {"preset": args.preset, "out_dir": args.out, **overrides}
        )
        rows, table = body["rows"], body["table_file"]
    else:
        result = run_suite(args.preset, resolve_out_dir(args.out), **overrides)
        rows, table = _row_dicts(result.rows), result.table_path
    for row in rows:
        print(_fmt_row(row))
    print(f"table: {table}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    if args.server:
        body = _post(
            args.server, "/reports", {"trace_dir": args.trace_dir, "out_path": args.out}
        )
        rows, table, skipped = body["rows"], body["table_file"], body["skipped"]
    else:
        result = report(args.trace_dir, out_path=args.out)
        rows, table, skipped = _row_dicts(result.rows), result.table_path, result.skipped
    for row in rows:
        print(_fmt_row(row))
    print(f"table: {table}")
    if skipped:
        print(f"skipped {len(skipped)} non-trace file(s): {', '.join(skipped)}", file=sys.stderr)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("tolfl.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tolfl",
        description="Failure-tolerant distributed anomaly detection experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
    p_run.add_argument("--server", help="service URL; default executes in process")
    p_run.set_defaults(func=_cmd_run)

    p_suite = sub.add_parser("suite", help="compare all four protocols under a preset")
    p_suite.add_argument("preset", choices=SUITE_PRESETS)
    p_suite.add_argument("--N", type=int, help="device count")
    p_suite.add_argument("--k", type=int, help="cluster count for the tolfl arm")
    p_suite.add_argument("--epochs", type=int)
    p_suite.add_argument("--seed", type=int)
    p_suite.add_argument("--reps", type=int, dest="repetitions")
    p_suite.add_argument("--samples-per-class", type=int, dest="samples_per_class")
    p_suite.add_argument("--alpha", type=float)
    p_suite.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
    p_suite.add_argument("--server", help="service URL; default executes in process")
    p_suite.set_defaults(func=_cmd_suite)

    p_report = sub.add_parser("report", help="aggregate a directory of trace files")
    p_report.add_argument("trace_dir", help="directory containing *.jsonl traces")
    p_report.add_argument("--out", help="table path (default <trace-dir>/report.csv)")
    p_report.add_argument("--server", help="service URL; default executes in process")
    p_report.set_defaults(func=_cmd_report)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExperimentError, CliError) as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
