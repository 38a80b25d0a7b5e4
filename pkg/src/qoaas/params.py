"""The tunable cost-parameter registry.

Sixty named non-negative weights feed the operator cost formulas. Fifteen
primary weights carry the classic hardware/software tradeoffs; the rest
are secondary multipliers (default 1.0) on individual formula terms and
additive per-operator overheads (default 0.0), so the tuning surface is a
genuine 60-dimensional space while default-valued secondaries leave the
base formulas untouched.

Additive parameters default to zero and therefore stay pinned under the
multiplicative tuning projection; they are reachable only through explicit
configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import SchemaViolation, UnknownParam


@dataclass(frozen=True)
class ParamSpec:
    name: str
    default: float
    lo: float
    hi: float
    doc: str


def _primary(name, default, doc):
    return ParamSpec(name, default, default / 100.0, default * 100.0, doc)


def _factor(name, doc):
    return ParamSpec(name, 1.0, 0.01, 100.0, doc)


def _overhead(name, doc):
    return ParamSpec(name, 0.0, 0.0, 1000.0, doc)


PARAM_REGISTRY: tuple[ParamSpec, ...] = (
    # primary weights
    _primary("cpu_tuple", 1.0, "per-row pipeline cost"),
    _primary("cpu_pred", 0.5, "per-row-per-conjunct predicate evaluation"),
    _primary("cpu_expr", 0.5, "per-row-per-expression projection cost"),
    _primary("cpu_compare", 0.7, "per-comparison cost in sorts and merges"),
    _primary("cpu_hash_build", 2.0, "per-row hash table insert"),
    _primary("cpu_hash_probe", 1.0, "per-row hash table lookup"),
    _primary("io_seq_page", 4.0, "sequential 8KiB page read"),
    _primary("io_rand_page", 8.0, "random page read (reserved: no v1 "
             "formula uses it; index paths would)"),
    _primary("mem_hash_entry", 0.1, "memory pressure per resident hash entry"),
    _primary("net_byte", 0.01, "per-byte cost of partition exchanges"),
    _primary("bridge_byte", 0.02, "per-byte cost of cross-engine transfer"),
    _primary("bridge_fixed", 50.0, "fixed cost of standing up an engine bridge"),
    _primary("sort_spill_factor", 1.2, "sort comparison inflation for spills"),
    _primary("agg_group_overhead", 1.5, "per-output-group bookkeeping"),
    _primary("exchange_setup", 10.0, "fixed cost of shuffle/broadcast setup"),
    # secondary multipliers, one per formula term
    _factor("scan_tuple_factor", "scales scan per-row term"),
    _factor("scan_page_factor", "scales scan page-IO term"),
    _factor("filter_pred_factor", "scales filter predicate term"),
    _factor("project_expr_factor", "scales projection expression term"),
    _factor("hash_build_factor", "scales hash join build term"),
    _factor("hash_probe_factor", "scales hash join probe term"),
    _factor("hash_output_factor", "scales hash join output term"),
    _factor("hash_mem_factor", "scales hash join memory term"),
    _factor("smj_compare_factor", "scales merge-join comparison term"),
    _factor("smj_output_factor", "scales merge-join output term"),
    _factor("nlj_pair_factor", "scales nested-loop pair term"),
    _factor("nlj_output_factor", "scales nested-loop output term"),
    _factor("sort_compare_factor", "scales sort comparison term"),
    _factor("hashagg_input_factor", "scales hash aggregate input term"),
    _factor("hashagg_group_factor", "scales hash aggregate group term"),
    _factor("streamagg_tuple_factor", "scales stream aggregate row term"),
    _factor("union_tuple_factor", "scales union row term"),
    _factor("shuffle_byte_factor", "scales shuffle byte term"),
    _factor("broadcast_byte_factor", "scales broadcast byte term"),
    _factor("gather_byte_factor", "scales gather byte term"),
    _factor("bridge_byte_factor", "scales bridge byte term"),
    _factor("limit_tuple_factor", "scales limit row term"),
    _factor("exchange_setup_factor", "scales exchange setup term"),
    _factor("bridge_fixed_factor", "scales bridge fixed term"),
    # additive per-operator overheads
    _overhead("scan_fixed", "fixed scan startup"),
    _overhead("filter_fixed", "fixed filter startup"),
    _overhead("project_fixed", "fixed projection startup"),
    _overhead("join_fixed", "fixed join startup"),
    _overhead("agg_fixed", "fixed aggregate startup"),
    _overhead("sort_fixed", "fixed sort startup"),
    _overhead("union_fixed", "fixed union startup"),
    _overhead("limit_fixed", "fixed limit startup"),
    _overhead("mem_sort_entry", "memory pressure per sorted row"),
    _overhead("mem_agg_entry", "memory pressure per aggregate group"),
    _overhead("mem_bridge_row", "memory pressure per bridged row"),
    _overhead("net_tuple", "per-row exchange framing overhead"),
    _overhead("bridge_tuple", "per-row bridge framing overhead"),
    _overhead("cpu_byte", "per-byte scan decode cost"),
    _overhead("shuffle_fixed", "fixed shuffle startup"),
    _overhead("broadcast_fixed", "fixed broadcast startup"),
    _overhead("gather_fixed", "fixed gather startup"),
    _overhead("streamagg_group_overhead", "per-group stream aggregate cost"),
    _overhead("filter_tuple", "per-row filter pipeline overhead"),
    _overhead("project_tuple", "per-row projection pipeline overhead"),
    _overhead("sort_tuple", "per-row sort materialization overhead"),
)

PARAM_COUNT = 60
assert len(PARAM_REGISTRY) == PARAM_COUNT, len(PARAM_REGISTRY)

_SPECS = {spec.name: spec for spec in PARAM_REGISTRY}
PARAM_NAMES = tuple(spec.name for spec in PARAM_REGISTRY)


def spec_of(name: str) -> ParamSpec:
    try:
        return _SPECS[name]
    except KeyError:
        raise UnknownParam(name) from None


@dataclass(frozen=True)
class ParamSet:
    values: dict = field(default_factory=dict)
    provenance: str = "default"

    def __post_init__(self):
        if set(self.values) != set(PARAM_NAMES):
            missing = set(PARAM_NAMES) - set(self.values)
            extra = set(self.values) - set(PARAM_NAMES)
            raise SchemaViolation(
                f"param set must name all {PARAM_COUNT} parameters "
                f"(missing={sorted(missing)[:3]}, extra={sorted(extra)[:3]})")
        for name, v in self.values.items():
            s = _SPECS[name]
            if not (s.lo <= v <= s.hi):
                raise SchemaViolation(
                    f"{name}={v} outside bounds [{s.lo}, {s.hi}]")

    def get(self, name: str) -> float:
        try:
            return self.values[name]
        except KeyError:
            raise UnknownParam(name) from None

    def replace(self, provenance=None, **overrides) -> "ParamSet":
        values = dict(self.values)
        values.update(overrides)
        return ParamSet(values, provenance or self.provenance)

    def digest(self) -> str:
        blob = json.dumps(self.values, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> dict:
        return dict(self.values)


def defaults(provenance="default") -> ParamSet:
    return ParamSet({s.name: s.default for s in PARAM_REGISTRY}, provenance)


def from_partial(partial: dict, provenance="default",
                 zero_others: bool = False) -> ParamSet:
    """Complete a sparse parameter dict.

    With ``zero_others`` the unnamed primaries become 0 while secondary
    multipliers stay at 1 and overheads at 0, which is what worked examples
    mean by "others 0".
    """
    values = {}
    for s in PARAM_REGISTRY:
        if s.name in partial:
            values[s.name] = float(partial[s.name])
        elif zero_others:
            values[s.name] = 1.0 if s.default == 1.0 else 0.0
        else:
            values[s.name] = s.default
    # widen bounds violations artificially? no: zeroed primaries need lo=0
    ps = ParamSet.__new__(ParamSet)
    object.__setattr__(ps, "values", values)
    object.__setattr__(ps, "provenance", provenance)
    if not zero_others:
        ParamSet.__post_init__(ps)
    return ps


def registry_json() -> list[dict]:
    return [{"name": s.name, "default": s.default, "lo": s.lo, "hi": s.hi,
             "doc": s.doc} for s in PARAM_REGISTRY]


def validate_param_payload(payload: dict) -> None:
    """Bounds/shape check for a config-store ``cost-params`` payload."""
    if not isinstance(payload, dict):
        raise SchemaViolation("cost-params payload must be an object")
    for name, v in payload.items():
        s = spec_of(name)
        if not isinstance(v, (int, float)):
            raise SchemaViolation(f"{name} must be numeric")
        if not (s.lo <= float(v) <= s.hi):
            raise SchemaViolation(f"{name}={v} outside bounds [{s.lo}, {s.hi}]")
