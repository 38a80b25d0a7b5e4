"""Operator-facing command line: serve, optimize, run, tune, stats, demo.

The CLI is a thin adapter over the library; all behavior lives in the
modules it calls so the HTTP service and the command line cannot diverge.
Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import cardinality, ir, postopt, tuner
from .catalog import load_catalog
from .engines import execute, plan_for_engine
from .engines.weights import load_true_weights
from .errors import InvalidPlan, NoValidPlan, QoaasError, UnsupportedOperator
from .explorer import OptimizeRequest, optimize
from .explorer.api import explain_text
from .simplify import simplify
from .stores import Stores

USER_ERRORS = (InvalidPlan, NoValidPlan, FileNotFoundError, ValueError)


def _add_common(p, catalog=True):
    if catalog:
        p.add_argument("--catalog", required=True, help="catalog bootstrap JSON")
    p.add_argument("--true-weights", help="hidden weights file for the toy engines")
    p.add_argument("--data-dir", default=os.environ.get("QOAAS_DATA_DIR"),
                   help="insight/config store directory "
                        "(defaults to $QOAAS_DATA_DIR)")
    p.add_argument("--json", action="store_true", help="machine-readable output")


def _load_cat(args):
    weights = load_true_weights(args.true_weights) if args.true_weights else None
    return load_catalog(args.catalog, true_weights=weights)


def _load_plan_file(path):
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, list):
        return [ir.PlanDocument.from_json(d) for d in data]
    return [ir.PlanDocument.from_json(data)]


def _load_overrides(path):
    if not path:
        return None
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return cardinality.CardinalityOverrides.from_json(data)


def cmd_optimize(args) -> int:
    cat = _load_cat(args)
    docs = _load_plan_file(args.plan)
    engines = args.engine.split(",")
    overrides = _load_overrides(args.true_cards)
    doc = docs[0]
    simplified = simplify(doc, cat, target_engines=engines)
    if args.stop_after == "simplify":
        out = simplified.to_json()
        print(json.dumps(out, indent=None if args.json else 2, sort_keys=True))
        return 0
    plan = optimize(OptimizeRequest(doc=simplified, target_engines=engines,
                                    mode=args.mode, overrides=overrides),
                    cat)
    emitted = postopt.emit(plan, args.mode, cat)
    payload = {
        "plans": [d.to_json() for d in emitted],
        "root_cost": plan.root_cost,
        "winner_engine": plan.root_engine,
        "memo_stats": plan.memo_stats,
    }
    if args.out:
        body = [d.to_json() for d in emitted]
        Path(args.out).write_text(
            json.dumps(body if len(body) > 1 else body[0], indent=2,
                       sort_keys=True), encoding="utf-8")
        payload["written"] = args.out
    if args.explain:
        print(explain_text(plan, cat), file=sys.stderr)
        print(json.dumps(plan.memo_stats, sort_keys=True), file=sys.stderr)
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    elif not args.out:
        print(json.dumps(payload["plans"] if len(payload["plans"]) > 1
                         else payload["plans"][0], indent=2, sort_keys=True))
    else:
        print(f"wrote {len(emitted)} plan document(s) to {args.out} "
              f"(cost {plan.root_cost:.3f}, engine {plan.root_engine})")
    return 0


def cmd_run(args) -> int:
    cat = _load_cat(args)
    docs = _load_plan_file(args.plan)
    if args.engine and all(d.root.annotation is None
                           or d.root.annotation.hint_only for d in docs):
        docs = [plan_for_engine(d, args.engine, cat) for d in docs]
    result = execute(docs, cat, true_weights_path=args.true_weights)
    metrics = {
        "total_runtime_units": result.metrics.total_runtime_units,
        "wall_time_s": result.metrics.wall_time_s,
        "per_node": [{"path": m.path, "physical_op": m.physical_op,
                      "engine": m.engine, "actual_rows": m.actual_rows,
                      "runtime_units": m.runtime_units,
                      "fragment_digest": m.fragment_digest}
                     for m in result.metrics.per_node],
    }
    if args.json:
        print(json.dumps({"rows": [list(r) for r in result.rows],
                          "metrics": metrics}, sort_keys=True))
        return 0
    w = csv.writer(sys.stdout)
    for row in result.rows:
        w.writerow(["" if v is None else v for v in row])
    print(json.dumps(metrics, sort_keys=True), file=sys.stderr)
    return 0


def cmd_tune(args) -> int:
    cat = _load_cat(args)
    workload = []
    for path in sorted(Path(args.workload).glob("*.plan.json")):
        workload.extend(_load_plan_file(path))
    stores = Stores(args.data_dir) if args.data_dir else None
    run = tuner.tune(args.engine, workload, args.budget, args.strategy,
                     args.seed, cat,
                     config_store=stores.config if stores else None,
                     insights=stores.insights if stores else None)
    out_dir = Path(args.out or ".")
    report_path = tuner.write_report(run, out_dir)
    summary = {"report": str(report_path),
               "baseline_objective": run.baseline_objective,
               "best_objective": run.best_objective,
               "improvement_pct": round(100 * run.improvement, 2)}
    print(json.dumps(summary, sort_keys=True) if args.json else
          f"run {run.run_id}: objective {run.baseline_objective:.1f} -> "
          f"{run.best_objective:.1f} ({100 * run.improvement:.1f}% better); "
          f"report at {report_path}")
    return 0


def cmd_stats(args) -> int:
    if not args.data_dir:
        raise ValueError("--data-dir (or QOAAS_DATA_DIR) is required")
    stores = Stores(args.data_dir)
    records, _ = stores.insights.query(limit=None)
    per_engine: dict = {}
    templates: dict = {}
    pairs = []
    for r in records:
        eng = r.get("engine")
        agg = per_engine.setdefault(eng, {"queries": 0, "runtime_units": 0.0,
                                          "est_cost": 0.0})
        agg["queries"] += 1
        agg["runtime_units"] += r.get("total_runtime_units") or 0.0
        agg["est_cost"] += r.get("total_est_cost") or 0.0
        t = r.get("template_digest")
        if t:
            templates[t] = templates.get(t, 0) + 1
        for n in r.get("per_node", []):
            if n.get("actual_rows") is not None and n.get("est_rows") is not None:
                pairs.append((n["est_rows"], n["actual_rows"]))

    out_dir = Path(args.out or args.data_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = {}
    if not args.no_figures:
        from . import report
        figures["engine_totals"] = str(report.engine_totals_figure(
            {e: v["runtime_units"] for e, v in per_engine.items()},
            out_dir / "stats-engine-totals.png"))
        figures["templates"] = str(report.template_frequency_figure(
            templates, out_dir / "stats-templates.png"))
        if pairs:
            figures["est_vs_actual"] = str(report.est_vs_actual_figure(
                pairs, out_dir / "stats-est-vs-actual.png"))
    if args.json:
        print(json.dumps({"engines": per_engine,
                          "templates": templates, "figures": figures},
                         sort_keys=True))
        return 0
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["engine", "queries", "runtime_units", "est_cost"])
    for e in sorted(per_engine):
        v = per_engine[e]
        w.writerow([e, v["queries"], round(v["runtime_units"], 3),
                    round(v["est_cost"], 3)])
    csv_path = out_dir / "stats-engines.csv"
    csv_path.write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    for name, path in figures.items():
        print(f"figure {name}: {path}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .service import QoaasService, make_server
    if not args.data_dir:
        raise ValueError("--data-dir (or QOAAS_DATA_DIR) is required")
    cat = _load_cat(args)
    service = QoaasService(catalog=cat, stores=Stores(args.data_dir))
    server = make_server(service, args.host, args.port)
    print(f"qoaas listening on http://{args.host}:{server.server_address[1]}"
          f" (engines: {', '.join(cat.engines())})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_demo(args) -> int:
    from .demo import build_demo_workspace
    catalog_path = build_demo_workspace(args.out, seed=args.seed)
    print(f"demo workspace at {args.out} (catalog: {catalog_path})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qoaas",
                                description="query optimizer as a service")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("optimize", help="optimize a plan document")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--engine", required=True,
                    help="target engine id, comma-separated for hybrid")
    sp.add_argument("--mode", default="full", choices=postopt.EMIT_MODES)
    sp.add_argument("--explain", action="store_true")
    sp.add_argument("--true-cards", help="cardinality overrides JSON file")
    sp.add_argument("--stop-after", choices=["simplify"])
    sp.add_argument("--out", help="write emitted plan document(s) here")
    _add_common(sp)
    sp.set_defaults(fn=cmd_optimize)

    sp = sub.add_parser("run", help="execute a plan on a toy engine")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--engine", help="engine for logical/hinted plans")
    _add_common(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("tune", help="offline cost-parameter tuning")
    sp.add_argument("--engine", required=True)
    sp.add_argument("--workload", required=True,
                    help="directory of *.plan.json files")
    sp.add_argument("--budget", type=int, default=50)
    sp.add_argument("--strategy", default="random",
                    choices=["random", "coordinate"])
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--out", help="report directory (default .)")
    _add_common(sp)
    sp.set_defaults(fn=cmd_tune)

    sp = sub.add_parser("stats", help="insight store summaries and figures")
    sp.add_argument("--out", help="figure/CSV directory (default data dir)")
    sp.add_argument("--no-figures", action="store_true")
    _add_common(sp, catalog=False)
    sp.set_defaults(fn=cmd_stats)

    sp = sub.add_parser("serve", help="start the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)
    _add_common(sp)
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("demo", help="write the seeded demo workspace")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(fn=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except UnsupportedOperator as e:
        print(f"error: UnsupportedOperator: {e}", file=sys.stderr)
        return 2
    except QoaasError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
