"""Query Insight Store and Config/Action Store.

Both are JSONL files with in-memory indexes: appends go through a single
writer and are flushed before returning; readers work off immutable
snapshots. Replaying a file reconstructs the exact store state, including
after a crash mid-append (a torn trailing line is ignored).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import params as params_mod
from .errors import BadFilter, SchemaViolation, UnknownKey

INSIGHTS_FILE = "insights.jsonl"
CONFIG_FILE = "config.jsonl"


def _append_jsonl(fh, obj) -> None:
    fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
    fh.flush()
    os.fsync(fh.fileno())


def _load_jsonl(path: Path) -> list:
    if not path.exists():
        return []
    out = []
    with path.open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError:
                break   # torn tail from a crash mid-append
    return out


# ---------------------------------------------------------------------------
# insight store


class InsightStore:
    """Append-only observability log, cursor-paged."""

    REQUIRED = ("query_id", "engine")

    def __init__(self, data_dir):
        self.path = Path(data_dir) / INSIGHTS_FILE
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._records = _load_jsonl(self.path)
        self._lock = threading.Lock()
        self._fh = self.path.open("a", encoding="utf-8")

    @property
    def last_id(self) -> int:
        return self._records[-1]["record_id"] if self._records else 0

    def append(self, record: dict) -> int:
        self._validate(record)
        with self._lock:
            rid = self.last_id + 1
            row = dict(record)
            row["v"] = 1
            row["record_id"] = rid
            row.setdefault("timestamp", time.time())
            _append_jsonl(self._fh, row)
            self._records.append(row)
            return rid

    def _validate(self, record: dict) -> None:
        for f in self.REQUIRED:
            if f not in record:
                raise SchemaViolation(f"insight record missing {f!r}")
        for node in record.get("per_node", []):
            for key in ("est_rows", "actual_rows", "runtime_units"):
                v = node.get(key)
                if v is not None and v < 0:
                    raise SchemaViolation(f"negative {key} in per_node entry")
        for key in ("total_runtime_units", "wall_time_s", "total_est_cost"):
            v = record.get(key)
            if v is not None and v < 0:
                raise SchemaViolation(f"negative {key}")

    def query(self, engine=None, since_id=None, query_template=None,
              time_range=None, session_id=None, query_id=None,
              limit=100) -> tuple[list, int]:
        """Matching records ordered by record id, plus the resume cursor."""
        if limit is not None and limit < 0:
            raise BadFilter("limit must be non-negative")
        if time_range is not None and len(time_range) != 2:
            raise BadFilter("time_range must be (t0, t1)")
        cursor = since_id or 0
        out = []
        for r in self._records:
            if r["record_id"] <= (since_id or 0):
                continue
            if engine is not None and r.get("engine") != engine \
                    and engine not in (r.get("engines") or []):
                continue
            if query_template is not None \
                    and r.get("template_digest") != query_template:
                continue
            if session_id is not None and r.get("session_id") != session_id:
                continue
            if query_id is not None and r.get("query_id") != query_id:
                continue
            if time_range is not None:
                t0, t1 = time_range
                ts = r.get("timestamp", 0)
                if not (t0 <= ts <= t1):
                    continue
            out.append(r)
            cursor = r["record_id"]
            if limit is not None and len(out) >= limit:
                break
        return out, cursor

    def latest_for_query(self, query_id: str) -> Optional[dict]:
        for r in reversed(self._records):
            if r.get("query_id") == query_id:
                return r
        return None

    def close(self) -> None:
        self._fh.close()


# ---------------------------------------------------------------------------
# config/action store


def scope_key(scope: dict) -> tuple:
    kind = scope.get("kind")
    if kind == "global":
        return ("global",)
    if kind == "engine":
        return ("engine", scope["id"])
    if kind == "workload":
        return ("workload", scope["id"])
    if kind == "query-template":
        return ("query-template", scope["digest"])
    raise SchemaViolation(f"bad scope {scope!r}")


def _validate_payload(key: str, value) -> None:
    if key in ("cost-params", "cost-params-trial"):
        params_mod.validate_param_payload(value)
        return
    if key == "card-overrides":
        if not isinstance(value, dict):
            raise SchemaViolation("card-overrides must map digest -> rows")
        for digest, rows in value.items():
            if not isinstance(digest, str) or not isinstance(rows, (int, float)) \
                    or rows < 0:
                raise SchemaViolation("card-overrides entries must be "
                                      "digest -> non-negative count")
        return
    if key.startswith("variant/"):
        if not isinstance(value, dict):
            raise SchemaViolation("variant payload must be an object")
        for rid in value.get("disable_rules", []):
            if not isinstance(rid, str):
                raise SchemaViolation("disable_rules must name rule ids")
        return
    if key.startswith("tuning-lock/"):
        return
    if key == "action":
        return
    raise UnknownKey(key)


_DEFAULTS = {
    "cost-params": lambda: params_mod.defaults().to_json(),
    "cost-params-trial": lambda: params_mod.defaults().to_json(),
    "card-overrides": dict,
}


class ConfigSnapshot:
    """Immutable view of the store at a sequence point."""

    def __init__(self, entries: dict, seq: int):
        self._entries = entries     # (scope_tuple, key) -> entry dict
        self.seq = seq

    def get(self, scope: tuple, key: str) -> Optional[dict]:
        return self._entries.get((scope, key))

    def resolve(self, key: str, context: dict) -> tuple:
        """(value, provenance scope string), precedence template >
        workload > engine > global > registry default."""
        if not key.startswith(("variant/", "tuning-lock/")) \
                and key not in _DEFAULTS and key != "action":
            raise UnknownKey(key)
        candidates = []
        if context.get("query_template"):
            candidates.append(("query-template", context["query_template"]))
        if context.get("workload"):
            candidates.append(("workload", context["workload"]))
        if context.get("engine"):
            candidates.append(("engine", context["engine"]))
        candidates.append(("global",))
        for scope in candidates:
            hit = self._entries.get((scope, key))
            if hit is not None:
                return hit["value"], scope[0]
        if key in _DEFAULTS:
            return _DEFAULTS[key](), "default"
        return None, "default"


class ConfigStore:
    def __init__(self, data_dir):
        self.path = Path(data_dir) / CONFIG_FILE
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._log = _load_jsonl(self.path)
        self._lock = threading.Lock()
        self._fh = self.path.open("a", encoding="utf-8")

    @property
    def current_seq(self) -> int:
        return self._log[-1]["seq"] if self._log else 0

    def put(self, scope: dict, key: str, value, author="unknown") -> int:
        sk = scope_key(scope)
        _validate_payload(key, value)
        with self._lock:
            version = 1 + sum(1 for e in self._log
                              if tuple(e["scope_key"]) == sk and e["key"] == key)
            entry = {"v": 1, "seq": self.current_seq + 1, "scope": scope,
                     "scope_key": list(sk), "key": key, "value": value,
                     "version": version, "author": author,
                     "timestamp": time.time()}
            _append_jsonl(self._fh, entry)
            self._log.append(entry)
            return version

    def snapshot(self, seq: Optional[int] = None) -> ConfigSnapshot:
        seq = self.current_seq if seq is None else seq
        entries: dict = {}
        for e in self._log:
            if e["seq"] > seq:
                break
            entries[(tuple(e["scope_key"]), e["key"])] = e
        return ConfigSnapshot(entries, seq)

    def resolve(self, key: str, context: dict) -> tuple:
        return self.snapshot().resolve(key, context)

    def close(self) -> None:
        self._fh.close()


@dataclass
class Stores:
    """The two state components, rooted in one data directory."""

    data_dir: Path
    insights: InsightStore = field(init=False)
    config: ConfigStore = field(init=False)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.insights = InsightStore(self.data_dir)
        self.config = ConfigStore(self.data_dir)

    def close(self) -> None:
        self.insights.close()
        self.config.close()
