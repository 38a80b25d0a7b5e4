"""The optimizer-as-a-service boundary: JSON over HTTP.

Endpoints: POST /v1/optimize, POST /v1/feedback, GET /v1/insights,
PUT /v1/config, GET /v1/config/resolve, GET /v1/health, and POST /v1/run
(toy-engine execution, available when the catalog has data loaded).

Every request works off immutable snapshots (catalog, config sequence,
overrides); a session id pins the config snapshot taken at its first
request, so mid-session configuration changes never bleed into later
requests of that session. Responses are canonical JSON: identical
requests against the same store state produce byte-identical bodies.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import cardinality, ir, postopt
from . import params as params_mod
from .engines import execute
from .errors import (InvalidPlan, NoValidPlan, QoaasError, SchemaViolation,
                     UnknownEngine, UnknownKey, UnsupportedOperator)
from .explorer import OptimizeRequest, optimize
from .simplify import simplify
from .stores import Stores

SERVICE_VERSION = "qoaas/0.1.0"


class HttpError(Exception):
    def __init__(self, status: int, code: str, message: str, extra=None):
        self.status = status
        self.payload = {"error": code, "message": message}
        if extra:
            self.payload.update(extra)
        super().__init__(message)


def canonical_body(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")


@dataclass
class QoaasService:
    catalog: object
    stores: Stores
    enable_run: bool = True
    started_at: float = field(default_factory=time.time)
    _sessions: dict = field(default_factory=dict)
    _session_lock: threading.Lock = field(default_factory=threading.Lock)
    cache_hits: int = 0
    cache_misses: int = 0
    _table_cache: set = field(default_factory=set)

    # -- helpers

    def _pin_session(self, session_id) -> int:
        if not session_id:
            return self.stores.config.current_seq
        with self._session_lock:
            if session_id not in self._sessions:
                self._sessions[session_id] = self.stores.config.current_seq
            return self._sessions[session_id]

    def _touch_tables(self, node: ir.PlanNode) -> None:
        if node.op == "read" and node.table not in (ir.EMPTY_TABLE,
                                                    ir.BRIDGE_TABLE):
            if node.table in self._table_cache:
                self.cache_hits += 1
            else:
                self.cache_misses += 1
                self._table_cache.add(node.table)
        for c in node.children:
            self._touch_tables(c)

    def _params_for(self, snapshot, engine: str, params_key: str):
        # precedence: config store > catalog profile overrides > registry
        value, scope = snapshot.resolve(params_key, {"engine": engine})
        base = params_mod.defaults().to_json()
        if scope == "default":
            base.update(self.catalog.engine(engine).cost_param_overrides or {})
        else:
            base.update(value or {})
        return params_mod.ParamSet(base, provenance=f"config:{params_key}")

    def _overrides_for(self, snapshot, template_digest: str):
        merged = {}
        for ctx in ({}, {"query_template": template_digest}):
            value, scope = snapshot.resolve("card-overrides", ctx)
            if value and scope != "default":
                merged.update(value)
        return cardinality.CardinalityOverrides(
            {k: float(v) for k, v in merged.items()})

    # -- endpoints

    def handle_optimize(self, body: dict) -> dict:
        try:
            doc = ir.PlanDocument.from_json(body["plan"])
        except Exception as e:
            raise HttpError(400, "MalformedPlan", f"cannot parse plan: {e}")
        engines = body.get("target_engines") or []
        if not engines:
            raise HttpError(400, "BadRequest", "target_engines required")
        for e in engines:
            try:
                self.catalog.engine(e)
            except UnknownEngine:
                raise HttpError(404, "UnknownEngine", f"engine {e!r} not registered")
        mode = body.get("mode", "full")
        if mode not in postopt.EMIT_MODES:
            raise HttpError(400, "BadRequest", f"bad mode {mode!r}")
        variant = body.get("variant", "A")
        session_id = body.get("session_id")

        seq = self._pin_session(session_id)
        snapshot = self.stores.config.snapshot(seq)

        disabled: tuple = ()
        params_key = "cost-params"
        vconf, vscope = snapshot.resolve(f"variant/{variant}", {})
        if vconf:
            disabled = tuple(vconf.get("disable_rules", ()))
            params_key = vconf.get("params_key", params_key)
        elif variant not in ("A", ""):
            if variant == "trial":
                params_key = "cost-params-trial"
            else:
                raise HttpError(404, "UnknownVariant",
                                f"variant {variant!r} has no configuration")

        report = ir.validate_plan(doc, self.catalog)
        if not report.ok:
            raise HttpError(400, "InvalidPlan", "plan failed validation",
                            {"errors": [{"path": e.path, "code": e.code,
                                         "message": e.message}
                                        for e in report.errors]})
        self._touch_tables(doc.root)
        template = ir.template_digest(doc, self.catalog)
        overrides = self._overrides_for(snapshot, template)
        params = {e: self._params_for(snapshot, e, params_key)
                  for e in engines}

        simplified = simplify(doc, self.catalog, target_engines=engines,
                              disabled_rules=disabled)
        try:
            plan = optimize(OptimizeRequest(
                doc=simplified, target_engines=engines, mode=mode,
                params=params, overrides=overrides, variant=variant,
                disabled_rules=disabled), self.catalog)
        except NoValidPlan as e:
            raise HttpError(422, "NoValidPlan", str(e))
        emitted = postopt.emit(plan, mode, self.catalog)

        per_node = []

        def collect(node, path):
            per_node.append({
                "path": path,
                "fragment_digest": ir.fragment_digest(node, self.catalog),
                "est_rows": plan.est_rows[id(node)],
            })
            for i, c in enumerate(node.children):
                collect(c, f"{path}.children[{i}]")
        collect(plan.doc.root, "root")

        record = {
            "query_id": doc.query_id, "session_id": session_id,
            "engine": plan.root_engine, "engines": engines, "mode": mode,
            "optimizer_variant": variant,
            "plan_digest": ir.plan_digest(emitted[-1]),
            "unoptimized_digest": ir.plan_digest(doc),
            "template_digest": template,
            "params_digest": params[plan.root_engine].digest(),
            "unoptimized_plan": doc.to_json(),
            "per_node": [{"fragment_digest": n["fragment_digest"],
                          "est_rows": n["est_rows"], "actual_rows": None,
                          "runtime_units": None} for n in per_node],
            "total_est_cost": plan.root_cost,
        }
        self.stores.insights.append(record)

        return {
            "plans": [d.to_json() for d in emitted],
            "root_cost": plan.root_cost,
            "est_rows": plan.est_rows[id(plan.doc.root)],
            "memo_stats": {k: v for k, v in plan.memo_stats.items()},
            "optimizer_version": SERVICE_VERSION,
            "variant": variant,
            "winner_engine": plan.root_engine,
            "config_snapshot_version": seq,
        }

    def handle_feedback(self, body: dict) -> dict:
        for f in ("query_id", "engine", "plan_digest", "per_node_actuals"):
            if f not in body:
                raise HttpError(400, "BadRequest", f"missing field {f!r}")
        record = self.stores.insights.latest_for_query(body["query_id"])
        if record is None:
            raise HttpError(404, "UnknownQuery",
                            f"query {body['query_id']!r} was never optimized")
        if record.get("plan_digest") != body["plan_digest"]:
            raise HttpError(409, "DigestMismatch",
                            "feedback digest does not match the optimized plan")
        actuals = body["per_node_actuals"]
        if not isinstance(actuals, dict) or any(
                not isinstance(v, (int, float)) or v < 0
                for v in actuals.values()):
            raise HttpError(400, "BadRequest",
                            "per_node_actuals must map digest -> count")

        enriched = dict(record)
        enriched.pop("record_id", None)
        enriched.pop("timestamp", None)
        per_node = []
        for entry in record.get("per_node", []):
            e = dict(entry)
            if e["fragment_digest"] in actuals:
                e["actual_rows"] = float(actuals[e["fragment_digest"]])
            per_node.append(e)
        enriched["per_node"] = per_node
        enriched["total_runtime_units"] = body.get("runtime_units")
        enriched["wall_time_s"] = body.get("wall_time")
        rid = self.stores.insights.append(enriched)

        merged, scope = self.stores.config.resolve("card-overrides", {})
        merged = dict(merged or {})
        merged.update({k: float(v) for k, v in actuals.items()})
        version = self.stores.config.put({"kind": "global"}, "card-overrides",
                                         merged, author="feedback")
        return {"record_id": rid, "overrides_version": version,
                "override_count": len(merged)}

    def handle_insights(self, query: dict) -> dict:
        kwargs = {}
        if "engine" in query:
            kwargs["engine"] = query["engine"][0]
        if "since_id" in query:
            kwargs["since_id"] = int(query["since_id"][0])
        if "query_template" in query:
            kwargs["query_template"] = query["query_template"][0]
        if "query_id" in query:
            kwargs["query_id"] = query["query_id"][0]
        if "since_ts" in query or "until_ts" in query:
            kwargs["time_range"] = (float(query.get("since_ts", ["0"])[0]),
                                    float(query.get("until_ts", ["1e18"])[0]))
        limit = int(query.get("limit", ["100"])[0])
        records, cursor = self.stores.insights.query(limit=limit, **kwargs)
        return {"records": records, "next_cursor": cursor}

    def handle_config_put(self, body: dict) -> dict:
        for f in ("scope", "key", "value"):
            if f not in body:
                raise HttpError(400, "BadRequest", f"missing field {f!r}")
        try:
            version = self.stores.config.put(body["scope"], body["key"],
                                             body["value"],
                                             author=body.get("author", "api"))
        except UnknownKey as e:
            raise HttpError(400, "UnknownKey", str(e))
        except SchemaViolation as e:
            raise HttpError(400, "SchemaViolation", str(e))
        return {"version": version,
                "config_seq": self.stores.config.current_seq}

    def handle_config_resolve(self, query: dict) -> dict:
        if "key" not in query:
            raise HttpError(400, "BadRequest", "key required")
        context = {}
        for f in ("engine", "workload", "query_template"):
            if f in query:
                context[f] = query[f][0]
        try:
            value, scope = self.stores.config.resolve(query["key"][0], context)
        except UnknownKey as e:
            raise HttpError(400, "UnknownKey", str(e))
        return {"value": value, "scope": scope}

    def handle_run(self, body: dict) -> dict:
        if not self.enable_run:
            raise HttpError(404, "RunDisabled",
                            "toy-engine execution is not enabled")
        plans = body.get("plans") or ([body["plan"]] if "plan" in body else [])
        if not plans:
            raise HttpError(400, "BadRequest", "plan or plans required")
        docs = [ir.PlanDocument.from_json(p) for p in plans]
        try:
            if body.get("engine") and all(
                    d.root.annotation is None or d.root.annotation.hint_only
                    for d in docs):
                from .engines import plan_for_engine
                docs = [plan_for_engine(d, body["engine"], self.catalog)
                        for d in docs]
            result = execute(docs, self.catalog)
        except UnsupportedOperator as e:
            raise HttpError(422, "UnsupportedOperator", str(e))
        return {
            "rows": [list(r) for r in result.rows],
            "metrics": {
                "total_runtime_units": result.metrics.total_runtime_units,
                "wall_time_s": result.metrics.wall_time_s,
                "per_node": [{
                    "path": m.path, "logical_op": m.logical_op,
                    "physical_op": m.physical_op, "engine": m.engine,
                    "fragment_digest": m.fragment_digest,
                    "actual_rows": m.actual_rows,
                    "runtime_units": m.runtime_units,
                } for m in result.metrics.per_node],
            },
        }

    def handle_health(self) -> dict:
        total = self.cache_hits + self.cache_misses
        return {
            "version": SERVICE_VERSION,
            "uptime_s": round(time.time() - self.started_at, 3),
            "engines": self.catalog.engines(),
            "insight_records": self.stores.insights.last_id,
            "config_seq": self.stores.config.current_seq,
            "catalog_cache": {
                "hits": self.cache_hits, "misses": self.cache_misses,
                "ratio": (self.cache_hits / total) if total else 0.0,
            },
        }

    # -- routing

    def dispatch(self, method: str, path: str, query: dict, body) -> tuple:
        try:
            if method == "POST" and path == "/v1/optimize":
                return 200, self.handle_optimize(body)
            if method == "POST" and path == "/v1/feedback":
                return 200, self.handle_feedback(body)
            if method == "GET" and path == "/v1/insights":
                return 200, self.handle_insights(query)
            if method == "PUT" and path == "/v1/config":
                return 200, self.handle_config_put(body)
            if method == "GET" and path == "/v1/config/resolve":
                return 200, self.handle_config_resolve(query)
            if method == "POST" and path == "/v1/run":
                return 200, self.handle_run(body)
            if method == "GET" and path == "/v1/health":
                return 200, self.handle_health()
            return 404, {"error": "NotFound", "message": f"no route {path}"}
        except HttpError as e:
            return e.status, e.payload
        except InvalidPlan as e:
            return 400, {"error": "InvalidPlan", "message": str(e)}
        except UnknownEngine as e:
            return 404, {"error": "UnknownEngine", "message": str(e)}
        except NoValidPlan as e:
            return 422, {"error": "NoValidPlan", "message": str(e)}
        except QoaasError as e:
            return 400, {"error": type(e).__name__, "message": str(e)}
        except Exception as e:  # pragma: no cover - defensive 500
            return 500, {"error": "Internal", "message": f"{type(e).__name__}: {e}"}


class _Handler(BaseHTTPRequestHandler):
    service: QoaasService = None
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet
        pass

    def _respond(self):
        parsed = urlparse(self.path)
        body = None
        length = int(self.headers.get("Content-Length") or 0)
        if length:
            try:
                body = json.loads(self.rfile.read(length))
            except json.JSONDecodeError:
                self._write(400, {"error": "BadRequest",
                                  "message": "body is not valid JSON"})
                return
        status, payload = self.service.dispatch(
            self.command, parsed.path, parse_qs(parsed.query), body)
        self._write(status, payload)

    def _write(self, status, payload):
        data = canonical_body(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    do_GET = do_POST = do_PUT = _respond


def make_server(service: QoaasService, host: str = "127.0.0.1",
                port: int = 8080) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)
