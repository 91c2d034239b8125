"""Command-line driver: inspect schemas, plan patches headlessly, serve the API.

Exit codes: 0 success, 2 parse failure, 3 unresolved decisions,
4 contradictory operators, 5 dependency cycle.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (
    ContradictoryOperators,
    CycleDetected,
    SchemaPlanError,
    UnresolvedHumanDecision,
)
from .model import SchemaModel, parse_path
from .operators import operator_from_json
from .parsing import parse_dump, resolve_references
from .patch import build_patch
from .session import Session
from .simulate import simulate_patch

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PENDING = 3
EXIT_CONTRADICTION = 4
EXIT_CYCLE = 5


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaPlanError as err:
        _emit_error(args, err)
        if isinstance(err, ContradictoryOperators):
            return EXIT_CONTRADICTION
        if isinstance(err, CycleDetected):
            return EXIT_CYCLE
        if isinstance(err, UnresolvedHumanDecision):
            return EXIT_PENDING
        return EXIT_PARSE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schemaplan")
    sub = parser.add_subparsers(dest="command", required=True)

    inspect = sub.add_parser("inspect", help="report entity counts, dependents, graphs")
    inspect.add_argument("--schema", required=True)
    inspect.add_argument("--graph", choices=["dot", "json"])
    inspect.add_argument("--deps", metavar="PATH")
    inspect.add_argument("--json", action="store_true")
    inspect.set_defaults(func=_cmd_inspect)

    plan = sub.add_parser("plan", help="expand operators and emit the SQL patch")
    plan.add_argument("--schema", required=True)
    plan.add_argument("--ops", required=True)
    plan.add_argument("--decisions")
    plan.add_argument("--auto-accept-single", action="store_true")
    plan.add_argument("--out")
    plan.add_argument("--commit", action="store_true")
    plan.add_argument("--report")
    plan.add_argument("--waive", action="append", default=[])
    plan.add_argument("--json", action="store_true")
    plan.set_defaults(func=_cmd_plan)

    serve = sub.add_parser("serve", help="run the HTTP session service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8485)
    serve.add_argument("--data-dir")
    serve.add_argument("--json", action="store_true")
    serve.set_defaults(func=_cmd_serve)
    return parser


def _emit_error(args, err: SchemaPlanError) -> None:
    if getattr(args, "json", False):
        print(json.dumps(err.to_json()), file=sys.stderr)
    else:
        print(f"error: {err.message}", file=sys.stderr)
        if isinstance(err, UnresolvedHumanDecision):
            for item in err.pending:
                print(f"  pending: {item}", file=sys.stderr)


def _load(args) -> SchemaModel:
    with open(args.schema, encoding="utf-8") as fh:
        text = fh.read()
    model, diags = parse_dump(text)
    errors = [d for d in diags if d.severity == "error"]
    if model is None or errors:
        _report_diags(args, diags)
        raise SystemExit(EXIT_PARSE)
    resolved, rdiags = resolve_references(model)
    if any(d.severity == "error" for d in rdiags):
        _report_diags(args, rdiags)
        raise SystemExit(EXIT_PARSE)
    _report_diags(args, [d for d in rdiags if d.severity == "warning"])
    return resolved


def _report_diags(args, diags) -> None:
    for diag in diags:
        if getattr(args, "json", False):
            print(json.dumps(diag.to_json()), file=sys.stderr)
        else:
            where = f" at {diag.span[0]}-{diag.span[1]}" if diag.span else ""
            print(f"{diag.severity}:{where} {diag.message}", file=sys.stderr)


def _lenient_path(model: SchemaModel, text: str):
    """Accept paths without the namespace; the default namespace is implied."""
    path = parse_path(text)
    if model.get(path) is not None:
        return path
    from .model import DEFAULT_NAMESPACE, EntityPath

    prefixed = EntityPath((DEFAULT_NAMESPACE,) + path.segments)
    if model.get(prefixed) is not None:
        return prefixed
    return path


def _cmd_inspect(args) -> int:
    model = _load(args)
    counts: dict[str, int] = {}
    for entity in model.entities.values():
        counts[entity.kind.value] = counts.get(entity.kind.value, 0) + 1
    summary = {
        "tables": counts.get("table", 0),
        "views": counts.get("view", 0),
        "procedures": counts.get("procedure", 0),
        "triggers": counts.get("trigger", 0),
        "columns": counts.get("column", 0),
        "constraints": counts.get("constraint", 0),
    }
    if args.json:
        print(json.dumps(summary))
    else:
        print(" ".join(f"{k}:{v}" for k, v in summary.items()))
    if args.deps:
        refs = model.dependents_of(_lenient_path(model, args.deps), include_contained=True)
        if args.json:
            print(json.dumps([r.to_json() for r in refs]))
        else:
            for ref in refs:
                print(f"{ref.kind.value} in {ref.owner} [{ref.span.start}-{ref.span.end}]")
    if args.graph:
        graph = model.dependency_graph()
        graph.ensure_acyclic()
        print(graph.to_dot() if args.graph == "dot" else json.dumps(graph.to_json(), indent=2))
    return EXIT_OK


def _cmd_plan(args) -> int:
    with open(args.schema, encoding="utf-8") as fh:
        dump_text = fh.read()
    with open(args.ops, encoding="utf-8") as fh:
        ops_doc = json.load(fh)
    try:
        session = Session(dump_text, auto_accept_single=args.auto_accept_single)
    except SchemaPlanError as err:
        _emit_error(args, err)
        return EXIT_PARSE
    session.add_operators([operator_from_json(o) for o in ops_doc])
    if args.decisions:
        with open(args.decisions, encoding="utf-8") as fh:
            entries = json.load(fh)
        unmatched = session.apply_decision_log(entries)
        if unmatched:
            _emit_error(args, UnresolvedHumanDecision(
                "decision log entries matched no pending reference",
                [json.dumps(u) for u in unmatched],
            ))
            return EXIT_PENDING
    for waived in args.waive:
        session.waive(waived)
    if session.pending_keys():
        _emit_error(args, UnresolvedHumanDecision("plan is not closed", session.pending_keys()))
        return EXIT_PENDING
    patch = build_patch(session, commit=args.commit)
    report = simulate_patch(patch, session.base_model)
    sql = patch.text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(sql)
    else:
        print(sql, end="")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
    if not report.clean and args.json:
        print(json.dumps(report.to_json()), file=sys.stderr)
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
