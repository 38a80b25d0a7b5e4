"""Table metadata, column statistics, data files, and engine profiles.

The catalog is populated once at startup (bootstrap JSON plus CSV data
files) and read concurrently afterwards; nothing here mutates after
registration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Optional

from . import ir
from .errors import (DataSchemaMismatch, DuplicateTable, UnknownColumn,
                     UnknownEngine, UnknownTable)


@dataclass(frozen=True)
class ColumnStats:
    ndv: int
    min: object = None
    max: object = None
    null_fraction: float = 0.0
    defaulted: bool = False

    def __post_init__(self):
        if self.ndv < 1:
            raise ValueError("ndv must be positive")
        if not (0.0 <= self.null_fraction <= 1.0):
            raise ValueError("null fraction outside [0,1]")
        if self.min is not None and self.max is not None and self.min > self.max:
            raise ValueError("min > max")


@dataclass
class TableMeta:
    name: str
    columns: list            # [(name, DataType)]
    row_count: int = 0
    data_path: Optional[str] = None
    pinned_engine: Optional[str] = None

    def __post_init__(self):
        names = [n for (n, _) in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {self.name}")
        if self.row_count < 0:
            raise ValueError("row count must be non-negative")

    def column_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.columns):
            if n == name:
                return i
        raise UnknownColumn(f"{self.name}.{name}")


@dataclass
class EngineProfile:
    engine_id: str
    physical_ops: frozenset
    distribution_modes: frozenset
    partition_count: int = 1
    supported_rules: Optional[frozenset] = None   # None means all rules
    cost_param_overrides: dict = field(default_factory=dict)
    # Hidden weights driving the toy runtime; only the engines module reads
    # this (the cost model must rediscover them through tuning).
    _true_weights: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.physical_ops:
            raise ValueError("profile needs at least one physical op")
        if "singleton" in self.distribution_modes and \
                len(self.distribution_modes) == 1 and self.partition_count != 1:
            raise ValueError("singleton engines have exactly one partition")

    def supports_op(self, op: str) -> bool:
        return op in self.physical_ops

    def supports_rule(self, rule_id: str) -> bool:
        return self.supported_rules is None or rule_id in self.supported_rules


DEFAULT_PROFILES = {
    "colstar": dict(
        partition_count=1,
        distribution_modes=("singleton",),
        physical_ops=("table_scan", "filter_exec", "project_exec", "hash_join",
                      "sort_merge_join", "nested_loop_join", "hash_aggregate",
                      "stream_aggregate", "sort_exec", "union_all_exec",
                      "limit_exec", "gather_exchange"),
    ),
    "shardrun": dict(
        partition_count=4,
        distribution_modes=("singleton", "broadcast", "hash-partitioned"),
        physical_ops=("table_scan", "filter_exec", "project_exec", "hash_join",
                      "sort_merge_join", "hash_aggregate", "sort_exec",
                      "union_all_exec", "limit_exec", "shuffle_exchange",
                      "broadcast_exchange", "gather_exchange"),
    ),
}


def _parse_cell(text: str, dtype: ir.DataType):
    if text == "":
        return None
    k = dtype.kind
    if k == "bool":
        return text.lower() in ("true", "1", "t", "yes")
    if k in ("i32", "i64"):
        return int(text)
    if k == "f64":
        return float(text)
    if k == "decimal":
        return Decimal(text)
    if k == "fixedchar":
        return text.ljust(dtype.length)[:dtype.length]
    return text


class Catalog:
    """Immutable-after-bootstrap registry of tables, stats, data, engines."""

    def __init__(self):
        self._tables: dict[str, TableMeta] = {}
        self._stats: dict[str, dict[str, ColumnStats]] = {}
        self._data: dict[str, list] = {}
        self._engines: dict[str, EngineProfile] = {}

    # -- tables

    def register_table(self, meta: TableMeta,
                       stats: Optional[dict] = None,
                       rows: Optional[list] = None) -> str:
        if meta.name in self._tables:
            raise DuplicateTable(meta.name)
        if meta.data_path is not None:
            rows = self._load_csv(meta)
        if rows is not None:
            if meta.row_count and meta.row_count != len(rows):
                meta.row_count = len(rows)
            elif not meta.row_count:
                meta.row_count = len(rows)
            self._data[meta.name] = rows
        self._tables[meta.name] = meta
        self._stats[meta.name] = dict(stats or {})
        return meta.name

    def _load_csv(self, meta: TableMeta) -> list:
        path = Path(meta.data_path)
        with path.open(newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            if len(header) != len(meta.columns):
                raise DataSchemaMismatch(
                    f"{meta.name}: csv has {len(header)} columns, "
                    f"schema has {len(meta.columns)}")
            rows = []
            for line in reader:
                if len(line) != len(meta.columns):
                    raise DataSchemaMismatch(
                        f"{meta.name}: row width {len(line)} != schema width")
                rows.append(tuple(_parse_cell(c, t)
                                  for c, (_, t) in zip(line, meta.columns)))
        return rows

    def table(self, name: str) -> TableMeta:
        try:
            return self._tables[name]
        except KeyError:
            raise UnknownTable(name) from None

    def tables(self) -> list[str]:
        return sorted(self._tables)

    def data(self, name: str) -> list:
        self.table(name)
        if name not in self._data:
            from .errors import DataMissing
            raise DataMissing(f"no data loaded for table {name}")
        return self._data[name]

    def has_data(self, name: str) -> bool:
        return name in self._data

    def resolve_stats(self, table: str, column: str) -> ColumnStats:
        meta = self.table(table)
        meta.column_index(column)
        stored = self._stats.get(table, {}).get(column)
        if stored is not None:
            return stored
        ndv = max(1, meta.row_count // 10)
        return ColumnStats(ndv=ndv, defaulted=True)

    # -- engines

    def register_engine(self, profile: EngineProfile) -> None:
        self._engines[profile.engine_id] = profile

    def register_default_engines(self) -> None:
        for name, spec in DEFAULT_PROFILES.items():
            self.register_engine(EngineProfile(
                engine_id=name,
                physical_ops=frozenset(spec["physical_ops"]),
                distribution_modes=frozenset(spec["distribution_modes"]),
                partition_count=spec["partition_count"]))

    def engine(self, engine_id: str) -> EngineProfile:
        try:
            return self._engines[engine_id]
        except KeyError:
            raise UnknownEngine(engine_id) from None

    def engines(self) -> list[str]:
        return sorted(self._engines)

    def engine_supports(self, engine_id: str, item: str) -> bool:
        """Membership test for a physical op or rule id."""
        profile = self.engine(engine_id)
        if item in ir.PHYSICAL_OPS:
            return profile.supports_op(item)
        return profile.supports_rule(item)


def _stats_from_json(obj: dict, dtype: ir.DataType) -> ColumnStats:
    def conv(v):
        if v is None:
            return None
        if dtype.kind == "decimal":
            return Decimal(str(v))
        return v
    return ColumnStats(ndv=int(obj["ndv"]),
                       min=conv(obj.get("min")), max=conv(obj.get("max")),
                       null_fraction=float(obj.get("null_fraction", 0.0)))


def load_catalog(path: str | Path, true_weights: Optional[dict] = None) -> Catalog:
    """Build a catalog from a bootstrap JSON document.

    Relative data paths resolve against the bootstrap file's directory.
    ``true_weights`` maps engine-id to a hidden weight dict for the toy
    runtimes; absent engines fall back to packaged defaults.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as f:
        doc = json.load(f)
    cat = Catalog()
    for t in doc.get("tables", []):
        columns = [(c["name"], ir.DataType.from_json(c["type"]))
                   for c in t["columns"]]
        data_path = t.get("data_path")
        if data_path is not None and not Path(data_path).is_absolute():
            data_path = str(path.parent / data_path)
        meta = TableMeta(name=t["name"], columns=columns,
                         row_count=int(t.get("row_count", 0)),
                         data_path=data_path,
                         pinned_engine=t.get("pinned_engine"))
        stats = {}
        for col_name, s in (t.get("stats") or {}).items():
            idx = meta.column_index(col_name)
            stats[col_name] = _stats_from_json(s, columns[idx][1])
        cat.register_table(meta, stats)

    engines = doc.get("engines")
    if not engines:
        cat.register_default_engines()
    else:
        for e in engines:
            base = DEFAULT_PROFILES.get(e["engine_id"], {})
            cat.register_engine(EngineProfile(
                engine_id=e["engine_id"],
                physical_ops=frozenset(e.get("physical_ops",
                                              base.get("physical_ops", ()))),
                distribution_modes=frozenset(e.get(
                    "distribution_modes", base.get("distribution_modes", ()))),
                partition_count=int(e.get("partition_count",
                                          base.get("partition_count", 1))),
                supported_rules=frozenset(e["rules"]) if e.get("rules") else None,
                cost_param_overrides=e.get("cost_param_overrides", {})))

    if true_weights:
        for engine_id, weights in true_weights.items():
            if engine_id in cat._engines:
                cat._engines[engine_id]._true_weights.update(weights)
    return cat
