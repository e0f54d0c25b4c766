"""Command line: ``python -m distlll {run,validate,oracle-suite}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import SchemaError
from .graph import load_edgelist
from .runner import VALIDATE_KINDS, load_config, report_json, run, validate_output


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (SchemaError, OSError) as exc:
        # nothing is written on a config error
        print(json.dumps({"ok": False, "errors": [{"type": type(exc).__name__, "message": str(exc)}]}), file=sys.stderr)
        return 2
    report = run(cfg, base_dir=Path(args.config).resolve().parent)
    if "output" not in cfg or args.stdout:
        sys.stdout.write(report_json(report))
    agg = report["aggregates"]
    print(f"{cfg['kind']}: {agg['passing']}/{agg['seeds']} seeds passed -> {'ok' if report['ok'] else 'FAILED'}", file=sys.stderr)
    return 0 if report["ok"] else 1


def _cmd_validate(args) -> int:
    try:
        graph = load_edgelist(args.graph)
        with open(args.artifact, encoding="utf-8") as fh:
            artifact = json.load(fh)
        result = validate_output(args.kind, graph, artifact)
    except (OSError, ValueError, SchemaError) as exc:
        print(json.dumps({"ok": False, "errors": [{"type": type(exc).__name__, "message": str(exc)}]}), file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0 if result["ok"] else 1


def _cmd_oracle_suite(args) -> int:
    cfg = {"version": 1, "kind": "oracle-suite", "seeds": args.seeds or [], "budget": args.budget}
    if args.output:
        cfg["output"] = args.output
    report = run(cfg, base_dir=Path.cwd())
    if not args.output:
        sys.stdout.write(report_json(report))
    for rec in report["records"]:
        for sec in rec.get("sections", []):
            print(f"seed {rec['seed']} {sec['name']}: {sec['passed']}/{sec['cases']}", file=sys.stderr)
    return 0 if report["ok"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="distlll", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--stdout", action="store_true", help="also print the report")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="re-check an output artifact against its graph")
    p_val.add_argument("kind", choices=VALIDATE_KINDS)
    p_val.add_argument("graph", help="edge list file ('n m' header, then 'u v' lines)")
    p_val.add_argument("artifact", help="JSON artifact as written by a run")
    p_val.set_defaults(func=_cmd_validate)

    p_or = sub.add_parser("oracle-suite", help="exact risk-calculus checks")
    p_or.add_argument("--budget", type=int, default=500)
    p_or.add_argument("--seeds", type=int, nargs="*")
    p_or.add_argument("--output")
    p_or.set_defaults(func=_cmd_oracle_suite)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
