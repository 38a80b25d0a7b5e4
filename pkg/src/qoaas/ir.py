"""Canonical cross-engine plan representation.

The dialect is a deterministic JSON encoding of relational plans: logical
operators, scalar/aggregate expressions, data types, and optional physical
annotations. Encoding is canonical (sorted keys, no insignificant
whitespace, shortest round-trip numbers), so byte equality of encodings is
structural equality of plans, and SHA-256 digests of encodings are stable
plan identities.

Dialect summary (version "qoaas-ir/1"):

  document   {"version", "query_id", "extensions": [{"uri","name"}], "root"}
  node       {"op", "children": [...], "annotation"?, ...op fields}
    read       table, schema? (inline, only for "__empty__"/"__bridge__"),
               bridge_id?
    filter     predicate
    project    exprs
    join       join_type in {inner,left,right,full,left_semi,left_anti},
               condition (may be null for a cross join)
    aggregate  group_keys (ordinals), measures (aggregate calls)
    sort       keys: [{"ordinal", "dir": "asc"|"desc"}]
    union_all  (two children, identical schemas)
    limit      count
  expr       {"expr":"col","ordinal"} | {"expr":"lit","type","value"}
             | {"expr":"call","fn","args", "to"? (cast target)}
  type       {"kind", "nullable", "precision"?, "scale"?, "length"?}
  annotation {"op", "engine", "hint_only", "build_side"?, "hash_ordinals"?,
              "from_engine"?, "to_engine"?, "exchange"?}

Column references are positional ordinals into the child output schema;
names exist only inside read/catalog resolution.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

IR_VERSION = "qoaas-ir/1"
HINT_EXTENSION_URI = "urn:qoaas:hints:v1"

# Reserved table names understood by validation and the executors.
EMPTY_TABLE = "__empty__"
BRIDGE_TABLE = "__bridge__"

SCALAR_KINDS = ("bool", "i32", "i64", "f64", "decimal", "date", "timestamp",
                "fixedchar", "varchar")
NUMERIC_KINDS = ("i32", "i64", "f64", "decimal")
JOIN_TYPES = ("inner", "left", "right", "full", "left_semi", "left_anti")

LOGICAL_OPS = ("read", "filter", "project", "join", "aggregate", "sort",
               "union_all", "limit")

# Physical operator vocabulary. limit_exec is not in the original operator
# list but logical limits need an executor for fully annotated plans.
PHYSICAL_OPS = (
    "table_scan", "filter_exec", "project_exec", "hash_join",
    "sort_merge_join", "nested_loop_join", "hash_aggregate",
    "stream_aggregate", "sort_exec", "union_all_exec", "limit_exec",
    "shuffle_exchange", "broadcast_exchange", "gather_exchange",
    "engine_bridge",
)

EXCHANGE_OPS = ("shuffle_exchange", "broadcast_exchange", "gather_exchange",
                "engine_bridge")

# Which physical operators may annotate which logical kind. Exchanges and
# bridges ride on identity projections so the logical tree stays closed
# under the eight operator kinds.
ANNOTATION_COMPAT = {
    "read": ("table_scan",),
    "filter": ("filter_exec",),
    "project": ("project_exec",) + EXCHANGE_OPS,
    "join": ("hash_join", "sort_merge_join", "nested_loop_join"),
    "aggregate": ("hash_aggregate", "stream_aggregate"),
    "sort": ("sort_exec",),
    "union_all": ("union_all_exec",),
    "limit": ("limit_exec",),
}


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class DataType:
    kind: str
    nullable: bool = False
    precision: Optional[int] = None
    scale: Optional[int] = None
    length: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown type kind {self.kind!r}")
        if self.kind == "decimal":
            p, s = self.precision, self.scale
            if p is None or s is None or not (1 <= p <= 38) or not (0 <= s <= p):
                raise ValueError(f"bad decimal({p},{s})")
        if self.kind in ("fixedchar", "varchar"):
            if self.length is None or self.length < 1:
                raise ValueError(f"bad {self.kind} length {self.length}")

    def with_nullable(self, nullable: bool) -> "DataType":
        return replace(self, nullable=nullable)

    def same_shape(self, other: "DataType") -> bool:
        """Kind plus parameters, ignoring nullability."""
        return (self.kind == other.kind and self.precision == other.precision
                and self.scale == other.scale and self.length == other.length)

    def to_json(self):
        out = {"kind": self.kind, "nullable": self.nullable}
        if self.precision is not None:
            out["precision"] = self.precision
        if self.scale is not None:
            out["scale"] = self.scale
        if self.length is not None:
            out["length"] = self.length
        return out

    @staticmethod
    def from_json(obj) -> "DataType":
        return DataType(kind=obj["kind"], nullable=bool(obj.get("nullable", False)),
                        precision=obj.get("precision"), scale=obj.get("scale"),
                        length=obj.get("length"))


def bool_(nullable=False):
    return DataType("bool", nullable)


def i32(nullable=False):
    return DataType("i32", nullable)


def i64(nullable=False):
    return DataType("i64", nullable)


def f64(nullable=False):
    return DataType("f64", nullable)


def decimal(precision, scale, nullable=False):
    return DataType("decimal", nullable, precision=precision, scale=scale)


def date(nullable=False):
    return DataType("date", nullable)


def timestamp(nullable=False):
    return DataType("timestamp", nullable)


def fixedchar(n, nullable=False):
    return DataType("fixedchar", nullable, length=n)


def varchar(n, nullable=False):
    return DataType("varchar", nullable, length=n)


# Byte widths used for exchange/scan sizing. varchar is budgeted at its
# declared maximum so widths are a pure function of the schema.
_WIDTHS = {"bool": 1, "i32": 4, "i64": 8, "f64": 8, "decimal": 16,
           "date": 4, "timestamp": 8}


def width_of(dtype: DataType) -> int:
    if dtype.kind in ("fixedchar", "varchar"):
        return dtype.length
    return _WIDTHS[dtype.kind]


def row_width(schema: Iterable[DataType]) -> int:
    return sum(width_of(t) for t in schema)


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Expression:
    """One of col / lit / call, discriminated by ``expr``."""

    expr: str
    ordinal: Optional[int] = None
    dtype: Optional[DataType] = None
    value: object = None
    fn: Optional[str] = None
    args: tuple = ()
    to: Optional[DataType] = None  # cast target

    def to_json(self):
        if self.expr == "col":
            return {"expr": "col", "ordinal": self.ordinal}
        if self.expr == "lit":
            return {"expr": "lit", "type": self.dtype.to_json(), "value": self.value}
        out = {"expr": "call", "fn": self.fn,
               "args": [a.to_json() for a in self.args]}
        if self.to is not None:
            out["to"] = self.to.to_json()
        return out

    @staticmethod
    def from_json(obj) -> "Expression":
        k = obj.get("expr")
        if k == "col":
            return col(int(obj["ordinal"]))
        if k == "lit":
            return lit(DataType.from_json(obj["type"]), obj["value"])
        if k == "call":
            args = tuple(Expression.from_json(a) for a in obj.get("args", []))
            to = DataType.from_json(obj["to"]) if "to" in obj else None
            return Expression("call", fn=obj["fn"], args=args, to=to)
        raise ValueError(f"bad expression object: {obj!r}")


def col(ordinal: int) -> Expression:
    return Expression("col", ordinal=ordinal)


def lit(dtype: DataType, value) -> Expression:
    return Expression("lit", dtype=dtype, value=value)


def call(fn: str, *args: Expression, to: DataType | None = None) -> Expression:
    return Expression("call", fn=fn, args=tuple(args), to=to)


AGGREGATE_FNS = ("count", "count_star", "sum", "min", "max", "avg")
SCALAR_FNS = ("add", "sub", "mul", "div", "and", "or", "not",
              "eq", "ne", "lt", "le", "gt", "ge", "cast")
COMPARISONS = ("eq", "ne", "lt", "le", "gt", "ge")
SYMMETRIC_FNS = ("eq", "ne", "and", "or", "add", "mul")

_ARITY = {"add": 2, "sub": 2, "mul": 2, "div": 2, "and": 2, "or": 2,
          "not": 1, "eq": 2, "ne": 2, "lt": 2, "le": 2, "gt": 2, "ge": 2,
          "cast": 1, "count": 1, "count_star": 0, "sum": 1, "min": 1,
          "max": 1, "avg": 1}

_ORDERABLE = ("i32", "i64", "f64", "decimal", "date", "timestamp",
              "fixedchar", "varchar", "bool")

# casts: source kind -> allowed target kinds
_CASTS = {
    "i32": ("i32", "i64", "f64", "decimal", "varchar"),
    "i64": ("i64", "f64", "decimal", "varchar"),
    "f64": ("f64",),
    "decimal": ("decimal", "f64", "varchar"),
    "date": ("date", "timestamp", "varchar"),
    "timestamp": ("timestamp", "varchar"),
    "fixedchar": ("fixedchar", "varchar"),
    "varchar": ("varchar",),
    "bool": ("bool", "varchar"),
}


class ExprTypeError(ValueError):
    pass


def _decimal_result(fn: str, a: DataType, b: DataType) -> DataType:
    p1, s1, p2, s2 = a.precision, a.scale, b.precision, b.scale
    if fn in ("add", "sub"):
        s = max(s1, s2)
        p = min(38, max(p1 - s1, p2 - s2) + s + 1)
    elif fn == "mul":
        p, s = min(38, p1 + p2), min(38, s1 + s2)
    else:
        raise ExprTypeError("decimal division yields f64, handled by caller")
    return decimal(p, min(s, p), nullable=a.nullable or b.nullable)


def type_of_call(fn: str, arg_types: list[DataType],
                 to: DataType | None = None) -> DataType:
    """Result type per the fixed function registry; raises ExprTypeError."""
    if fn not in _ARITY:
        raise ExprTypeError(f"unknown function {fn!r}")
    if len(arg_types) != _ARITY[fn]:
        raise ExprTypeError(f"{fn} expects {_ARITY[fn]} args, got {len(arg_types)}")
    nullable = any(t.nullable for t in arg_types)

    if fn in ("add", "sub", "mul", "div"):
        a, b = arg_types
        if a.kind != b.kind or a.kind not in NUMERIC_KINDS:
            raise ExprTypeError(f"{fn} requires two numerics of the same kind, "
                                f"got {a.kind}/{b.kind}")
        if a.kind == "decimal":
            if fn == "div":
                return f64(True)  # decimal division yields f64
            return _decimal_result(fn, a, b)
        # integer division can hit zero, which yields null
        return DataType(a.kind, nullable or fn == "div")
    if fn in ("and", "or"):
        a, b = arg_types
        if a.kind != "bool" or b.kind != "bool":
            raise ExprTypeError(f"{fn} requires booleans")
        return bool_(nullable)
    if fn == "not":
        if arg_types[0].kind != "bool":
            raise ExprTypeError("not requires a boolean")
        return bool_(nullable)
    if fn in COMPARISONS:
        a, b = arg_types
        if a.kind != b.kind:
            raise ExprTypeError(f"{fn} requires matching kinds, got {a.kind}/{b.kind}")
        if a.kind not in _ORDERABLE:
            raise ExprTypeError(f"{fn} not defined for {a.kind}")
        return bool_(nullable)
    if fn == "cast":
        if to is None:
            raise ExprTypeError("cast requires a target type")
        src = arg_types[0]
        if to.kind not in _CASTS.get(src.kind, ()):
            raise ExprTypeError(f"cannot cast {src.kind} to {to.kind}")
        if to.kind in ("fixedchar", "varchar") and src.kind in ("fixedchar", "varchar"):
            if to.length < src.length:
                raise ExprTypeError("narrowing char cast not allowed")
        return to.with_nullable(nullable or to.nullable)
    # aggregates
    if fn == "count_star":
        return i64(False)
    if fn == "count":
        return i64(False)
    a = arg_types[0]
    if fn == "sum":
        if a.kind in ("i32", "i64"):
            return i64(True)
        if a.kind == "f64":
            return f64(True)
        if a.kind == "decimal":
            return decimal(38, a.scale, True)
        raise ExprTypeError(f"sum not defined for {a.kind}")
    if fn == "avg":
        if a.kind not in NUMERIC_KINDS:
            raise ExprTypeError(f"avg not defined for {a.kind}")
        return f64(True)
    if fn in ("min", "max"):
        if a.kind not in _ORDERABLE:
            raise ExprTypeError(f"{fn} not defined for {a.kind}")
        return a.with_nullable(True)
    raise ExprTypeError(f"unhandled function {fn}")


def expr_type(expr: Expression, input_schema: tuple[DataType, ...]) -> DataType:
    """Type-check an expression against its input schema."""
    if expr.expr == "col":
        if expr.ordinal is None or not (0 <= expr.ordinal < len(input_schema)):
            raise ExprTypeError(f"ordinal {expr.ordinal} out of range "
                                f"(width {len(input_schema)})")
        return input_schema[expr.ordinal]
    if expr.expr == "lit":
        _check_literal(expr.dtype, expr.value)
        return expr.dtype if expr.value is not None else expr.dtype.with_nullable(True)
    if expr.expr == "call":
        if expr.fn in AGGREGATE_FNS:
            raise ExprTypeError(f"aggregate {expr.fn} outside aggregate measures")
        arg_types = [expr_type(a, input_schema) for a in expr.args]
        return type_of_call(expr.fn, arg_types, expr.to)
    raise ExprTypeError(f"bad expression variant {expr.expr!r}")


def measure_type(expr: Expression, input_schema: tuple[DataType, ...]) -> DataType:
    """Type-check an aggregate measure: one aggregate call over scalar args."""
    if expr.expr != "call" or expr.fn not in AGGREGATE_FNS:
        raise ExprTypeError("measure must be an aggregate call")
    arg_types = [expr_type(a, input_schema) for a in expr.args]
    return type_of_call(expr.fn, arg_types)


def _check_literal(dtype: DataType, value) -> None:
    if value is None:
        return
    k = dtype.kind
    ok = True
    if k == "bool":
        ok = isinstance(value, bool)
    elif k in ("i32", "i64"):
        ok = isinstance(value, int) and not isinstance(value, bool)
        if ok and k == "i32":
            ok = -2**31 <= value < 2**31
    elif k == "f64":
        ok = isinstance(value, (int, float)) and not isinstance(value, bool) \
            and math.isfinite(float(value))
    elif k in ("decimal", "date", "timestamp", "fixedchar", "varchar"):
        ok = isinstance(value, str)
    if not ok:
        raise ExprTypeError(f"literal value {value!r} invalid for {k}")


def references(expr: Expression) -> set[int]:
    """Set of input ordinals an expression reads."""
    if expr.expr == "col":
        return {expr.ordinal}
    if expr.expr == "call":
        out: set[int] = set()
        for a in expr.args:
            out |= references(a)
        return out
    return set()


def remap_expr(expr: Expression, mapping: dict[int, int]) -> Expression:
    """Rewrite column ordinals through ``mapping`` (must cover all refs)."""
    if expr.expr == "col":
        return col(mapping[expr.ordinal])
    if expr.expr == "call":
        return Expression("call", fn=expr.fn,
                          args=tuple(remap_expr(a, mapping) for a in expr.args),
                          to=expr.to)
    return expr


def substitute(expr: Expression, bindings: list[Expression]) -> Expression:
    """Replace each ColumnRef k with bindings[k]."""
    if expr.expr == "col":
        return bindings[expr.ordinal]
    if expr.expr == "call":
        return Expression("call", fn=expr.fn,
                          args=tuple(substitute(a, bindings) for a in expr.args),
                          to=expr.to)
    return expr


def split_conjuncts(expr: Optional[Expression]) -> list[Expression]:
    if expr is None:
        return []
    if expr.expr == "call" and expr.fn == "and":
        return split_conjuncts(expr.args[0]) + split_conjuncts(expr.args[1])
    return [expr]


def make_conjunction(conjuncts: list[Expression]) -> Optional[Expression]:
    if not conjuncts:
        return None
    out = conjuncts[0]
    for c in conjuncts[1:]:
        out = call("and", out, c)
    return out


# ---------------------------------------------------------------------------
# physical annotations


@dataclass(frozen=True)
class PhysicalAnnotation:
    op: str
    engine: str
    hint_only: bool = False
    build_side: Optional[str] = None        # hash_join: "left" | "right"
    hash_ordinals: Optional[tuple] = None   # shuffle_exchange keys
    from_engine: Optional[str] = None       # engine_bridge
    to_engine: Optional[str] = None
    exchange: Optional[str] = None          # v2 hint: "broadcast" | "shuffle"
    enforcer: bool = False                  # inserted to satisfy a property

    def to_json(self):
        out = {"op": self.op, "engine": self.engine, "hint_only": self.hint_only}
        if self.enforcer:
            out["enforcer"] = True
        if self.build_side is not None:
            out["build_side"] = self.build_side
        if self.hash_ordinals is not None:
            out["hash_ordinals"] = list(self.hash_ordinals)
        if self.from_engine is not None:
            out["from_engine"] = self.from_engine
        if self.to_engine is not None:
            out["to_engine"] = self.to_engine
        if self.exchange is not None:
            out["exchange"] = self.exchange
        return out

    @staticmethod
    def from_json(obj) -> "PhysicalAnnotation":
        ho = obj.get("hash_ordinals")
        return PhysicalAnnotation(
            op=obj["op"], engine=obj["engine"],
            hint_only=bool(obj.get("hint_only", False)),
            build_side=obj.get("build_side"),
            hash_ordinals=tuple(ho) if ho is not None else None,
            from_engine=obj.get("from_engine"), to_engine=obj.get("to_engine"),
            exchange=obj.get("exchange"), enforcer=bool(obj.get("enforcer", False)))


# ---------------------------------------------------------------------------
# plan nodes and documents


@dataclass(frozen=True)
class SortKey:
    ordinal: int
    dir: str = "asc"

    def to_json(self):
        return {"ordinal": self.ordinal, "dir": self.dir}


@dataclass(frozen=True)
class PlanNode:
    op: str
    children: tuple = ()
    annotation: Optional[PhysicalAnnotation] = None
    table: Optional[str] = None
    inline_schema: Optional[tuple] = None      # only for __empty__/__bridge__
    bridge_id: Optional[str] = None
    predicate: Optional[Expression] = None
    exprs: Optional[tuple] = None
    join_type: Optional[str] = None
    condition: Optional[Expression] = None
    group_keys: Optional[tuple] = None
    measures: Optional[tuple] = None
    sort_keys: Optional[tuple] = None
    count: Optional[int] = None

    def with_annotation(self, ann: Optional[PhysicalAnnotation]) -> "PlanNode":
        return replace(self, annotation=ann)

    def with_children(self, children: tuple) -> "PlanNode":
        return replace(self, children=children)

    def to_json(self):
        out = {"op": self.op, "children": [c.to_json() for c in self.children]}
        if self.annotation is not None:
            out["annotation"] = self.annotation.to_json()
        if self.op == "read":
            out["table"] = self.table
            if self.inline_schema is not None:
                out["schema"] = [t.to_json() for t in self.inline_schema]
            if self.bridge_id is not None:
                out["bridge_id"] = self.bridge_id
        elif self.op == "filter":
            out["predicate"] = self.predicate.to_json()
        elif self.op == "project":
            out["exprs"] = [e.to_json() for e in self.exprs]
        elif self.op == "join":
            out["join_type"] = self.join_type
            out["condition"] = None if self.condition is None else self.condition.to_json()
        elif self.op == "aggregate":
            out["group_keys"] = list(self.group_keys)
            out["measures"] = [m.to_json() for m in self.measures]
        elif self.op == "sort":
            out["keys"] = [k.to_json() for k in self.sort_keys]
        elif self.op == "limit":
            out["count"] = self.count
        return out

    @staticmethod
    def from_json(obj) -> "PlanNode":
        op = obj.get("op")
        children = tuple(PlanNode.from_json(c) for c in obj.get("children", []))
        ann = obj.get("annotation")
        annotation = PhysicalAnnotation.from_json(ann) if ann else None
        if op == "read":
            schema = obj.get("schema")
            return PlanNode("read", children, annotation, table=obj.get("table"),
                            inline_schema=tuple(DataType.from_json(t) for t in schema)
                            if schema is not None else None,
                            bridge_id=obj.get("bridge_id"))
        if op == "filter":
            return PlanNode("filter", children, annotation,
                            predicate=Expression.from_json(obj["predicate"]))
        if op == "project":
            return PlanNode("project", children, annotation,
                            exprs=tuple(Expression.from_json(e) for e in obj["exprs"]))
        if op == "join":
            cond = obj.get("condition")
            return PlanNode("join", children, annotation,
                            join_type=obj.get("join_type"),
                            condition=Expression.from_json(cond) if cond else None)
        if op == "aggregate":
            return PlanNode("aggregate", children, annotation,
                            group_keys=tuple(int(k) for k in obj["group_keys"]),
                            measures=tuple(Expression.from_json(m) for m in obj["measures"]))
        if op == "sort":
            return PlanNode("sort", children, annotation,
                            sort_keys=tuple(SortKey(int(k["ordinal"]), k["dir"])
                                            for k in obj["keys"]))
        if op == "union_all":
            return PlanNode("union_all", children, annotation)
        if op == "limit":
            return PlanNode("limit", children, annotation, count=int(obj["count"]))
        raise ValueError(f"unknown op {op!r}")


def read(table: str, inline_schema=None, bridge_id=None) -> PlanNode:
    return PlanNode("read", table=table,
                    inline_schema=tuple(inline_schema) if inline_schema else None,
                    bridge_id=bridge_id)


def filter_(predicate: Expression, child: PlanNode) -> PlanNode:
    return PlanNode("filter", (child,), predicate=predicate)


def project(exprs: Iterable[Expression], child: PlanNode) -> PlanNode:
    return PlanNode("project", (child,), exprs=tuple(exprs))


def join(join_type: str, condition: Optional[Expression],
         left: PlanNode, right: PlanNode) -> PlanNode:
    return PlanNode("join", (left, right), join_type=join_type, condition=condition)


def aggregate(group_keys: Iterable[int], measures: Iterable[Expression],
              child: PlanNode) -> PlanNode:
    return PlanNode("aggregate", (child,), group_keys=tuple(group_keys),
                    measures=tuple(measures))


def sort(keys: Iterable[SortKey], child: PlanNode) -> PlanNode:
    return PlanNode("sort", (child,), sort_keys=tuple(keys))


def union_all(left: PlanNode, right: PlanNode) -> PlanNode:
    return PlanNode("union_all", (left, right))


def limit(count: int, child: PlanNode) -> PlanNode:
    return PlanNode("limit", (child,), count=count)


@dataclass(frozen=True)
class PlanDocument:
    root: PlanNode
    query_id: str = ""
    version: str = IR_VERSION
    extensions: tuple = ()
    # segment wiring, present only on full-mode emitted segment documents
    segment_of: Optional[str] = None
    engine: Optional[str] = None
    out_bridge: Optional[str] = None

    def to_json(self):
        out = {"version": self.version, "query_id": self.query_id,
               "extensions": [{"uri": u, "name": n} for (u, n) in self.extensions],
               "root": self.root.to_json()}
        if self.segment_of is not None:
            out["segment_of"] = self.segment_of
        if self.engine is not None:
            out["engine"] = self.engine
        if self.out_bridge is not None:
            out["bridge_id"] = self.out_bridge
        return out

    @staticmethod
    def from_json(obj) -> "PlanDocument":
        return PlanDocument(
            root=PlanNode.from_json(obj["root"]),
            query_id=obj.get("query_id", ""),
            version=obj.get("version", IR_VERSION),
            extensions=tuple((e["uri"], e["name"]) for e in obj.get("extensions", [])),
            segment_of=obj.get("segment_of"), engine=obj.get("engine"),
            out_bridge=obj.get("bridge_id"))


# ---------------------------------------------------------------------------
# canonical encoding and digests


def _canon_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)


def encode_canonical(doc: PlanDocument) -> bytes:
    """Deterministic byte encoding: equal documents encode identically."""
    return _canon_dumps(doc.to_json()).encode("utf-8")


def decode(data: bytes | str) -> PlanDocument:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return PlanDocument.from_json(json.loads(data))


def plan_digest(doc: PlanDocument) -> str:
    """SHA-256 of the canonical encoding, query id excluded."""
    obj = doc.to_json()
    obj.pop("query_id", None)
    return hashlib.sha256(_canon_dumps(obj).encode("utf-8")).hexdigest()


def _canon_expr(expr: Expression):
    """Expression as canonical JSON: flattened, argument-sorted where the
    function is symmetric, so logically identical predicates built in
    different orders digest identically."""
    if expr.expr != "call":
        return expr.to_json()
    if expr.fn in ("and", "or"):
        parts = []
        stack = [expr]
        while stack:
            e = stack.pop()
            if e.expr == "call" and e.fn == expr.fn:
                stack.extend(e.args)
            else:
                parts.append(_canon_expr(e))
        parts.sort(key=_canon_dumps)
        return {"expr": "call", "fn": expr.fn, "args": parts}
    args = [_canon_expr(a) for a in expr.args]
    if expr.fn in ("eq", "ne"):
        args.sort(key=_canon_dumps)
    out = {"expr": "call", "fn": expr.fn, "args": args}
    if expr.to is not None:
        out["to"] = expr.to.to_json()
    return out


def _flatten_join_region(node: PlanNode):
    """Decompose a maximal region of inner joins plus interleaved filters
    into (leaf subtrees, conjuncts over the concatenated leaf columns).
    Conjunct ordinals are rebased onto the concatenation of leaf outputs in
    left-to-right order."""
    leaves: list[PlanNode] = []
    conjuncts: list[Expression] = []

    def walk(n: PlanNode, base: int) -> int:
        if n.op == "join" and n.join_type == "inner":
            lw = walk(n.children[0], base)
            rw = walk(n.children[1], base + lw)
            for c in split_conjuncts(n.condition):
                conjuncts.append(remap_expr(c, {o: base + o for o in references(c)}))
            return lw + rw
        if n.op == "filter" and n.children[0].op == "join" \
                and n.children[0].join_type == "inner":
            w = walk(n.children[0], base)
            for c in split_conjuncts(n.predicate):
                conjuncts.append(remap_expr(c, {o: base + o for o in references(c)}))
            return w
        leaves.append(n)
        return _canon_width(n)

    walk(node, 0)
    return leaves, conjuncts


def _canon_width(node: PlanNode) -> int:
    """Output width, catalog-independent. Reads must carry inline schemas;
    fragment_digest resolves them first."""
    if node.op == "read":
        if node.inline_schema is None:
            raise ValueError("fragment digest needs schema-resolved reads")
        return len(node.inline_schema)
    if node.op in ("filter", "sort", "limit", "union_all"):
        return _canon_width(node.children[0])
    if node.op == "project":
        return len(node.exprs)
    if node.op == "join":
        if node.join_type in ("left_semi", "left_anti"):
            return _canon_width(node.children[0])
        return _canon_width(node.children[0]) + _canon_width(node.children[1])
    if node.op == "aggregate":
        return len(node.group_keys) + len(node.measures)
    raise ValueError(f"unknown op {node.op}")


def _canon_node(node: PlanNode):
    """Canonical logical form: annotations dropped, inner-join regions
    flattened to an order-insensitive set shape."""
    if node.op == "join" and node.join_type == "inner" or (
            node.op == "filter" and node.children[0].op == "join"
            and node.children[0].join_type == "inner"):
        leaves, conjuncts = _flatten_join_region(node)
        canon_leaves = []
        offsets = []
        off = 0
        for leaf in leaves:
            offsets.append(off)
            off += _canon_width(leaf)
            canon_leaves.append(_canon_node(leaf))
        order = sorted(range(len(leaves)), key=lambda i: _canon_dumps(canon_leaves[i]))
        new_off = {}
        acc = 0
        for i in order:
            new_off[i] = acc
            acc += _canon_width(leaves[i])

        def rebase(o):
            for i in reversed(range(len(leaves))):
                if o >= offsets[i]:
                    return new_off[i] + (o - offsets[i])
            raise ValueError("ordinal out of range")

        canon_conds = []
        for c in conjuncts:
            remapped = remap_expr(c, {o: rebase(o) for o in references(c)})
            canon_conds.append(_canon_expr(remapped))
        canon_conds.sort(key=_canon_dumps)
        return {"op": "join_set",
                "inputs": [canon_leaves[i] for i in order],
                "conds": canon_conds}

    out = {"op": node.op, "children": [_canon_node(c) for c in node.children]}
    if node.op == "read":
        out["table"] = node.table
        if node.inline_schema is not None:
            out["schema"] = [t.to_json() for t in node.inline_schema]
        if node.bridge_id is not None:
            out["bridge_id"] = node.bridge_id
    elif node.op == "filter":
        out["predicate"] = _canon_expr(node.predicate)
    elif node.op == "project":
        out["exprs"] = [_canon_expr(e) for e in node.exprs]
    elif node.op == "join":
        out["join_type"] = node.join_type
        out["condition"] = None if node.condition is None \
            else _canon_expr(node.condition)
    elif node.op == "aggregate":
        out["group_keys"] = list(node.group_keys)
        out["measures"] = [_canon_expr(m) for m in node.measures]
    elif node.op == "sort":
        out["keys"] = [k.to_json() for k in node.sort_keys]
    elif node.op == "limit":
        out["count"] = node.count
    return out


def resolve_reads(node: PlanNode, catalog) -> PlanNode:
    """Copy of the tree with every read carrying its inline schema, so the
    fragment canonicalization is catalog-independent afterwards."""
    children = tuple(resolve_reads(c, catalog) for c in node.children)
    if node.op == "read" and node.inline_schema is None:
        meta = catalog.table(node.table)
        schema = tuple(t for (_, t) in meta.columns)
        return replace(node, children=children, inline_schema=schema)
    return node.with_children(children)


def fragment_digest(node: PlanNode, catalog=None) -> str:
    """Digest of the node's logical content, invariant under inner-join
    reordering, conjunct order, and physical annotations.

    Cardinality feedback is keyed by these digests: an executed plan and a
    later re-optimization agree on fragment identity even when the search
    picked a different join order.
    """
    if catalog is not None:
        node = resolve_reads(node, catalog)
    blob = _canon_dumps(_canon_node(node))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def normalize_literals(node: PlanNode) -> PlanNode:
    """Replace literal values with typed placeholders; used for template
    digests so parameter-only variants of a query group together."""
    def walk_expr(e: Expression) -> Expression:
        if e.expr == "lit":
            return lit(e.dtype, "?")
        if e.expr == "call":
            return Expression("call", fn=e.fn,
                              args=tuple(walk_expr(a) for a in e.args), to=e.to)
        return e

    kwargs = {}
    if node.predicate is not None:
        kwargs["predicate"] = walk_expr(node.predicate)
    if node.exprs is not None:
        kwargs["exprs"] = tuple(walk_expr(e) for e in node.exprs)
    if node.condition is not None:
        kwargs["condition"] = walk_expr(node.condition)
    if node.measures is not None:
        kwargs["measures"] = tuple(walk_expr(m) for m in node.measures)
    if node.op == "limit":
        kwargs["count"] = 0
    out = replace(node, **kwargs) if kwargs else node
    return out.with_children(tuple(normalize_literals(c) for c in node.children))


def template_digest(doc: PlanDocument, catalog=None) -> str:
    """Digest of the literal-normalized plan; the workload-template key."""
    root = normalize_literals(doc.root)
    if catalog is not None:
        root = resolve_reads(root, catalog)
    return plan_digest(PlanDocument(root=root, query_id=""))


# ---------------------------------------------------------------------------
# schema derivation and validation


@dataclass
class ValidationError:
    path: str
    code: str
    message: str


@dataclass
class ValidationReport:
    ok: bool
    errors: list = field(default_factory=list)


_CHILD_COUNTS = {"read": 0, "filter": 1, "project": 1, "join": 2,
                 "aggregate": 1, "sort": 1, "union_all": 2, "limit": 1}


class SchemaContext:
    """Memoized bottom-up schema and column-origin derivation."""

    def __init__(self, catalog):
        self.catalog = catalog
        self._schemas: dict[int, tuple] = {}
        self._origins: dict[int, tuple] = {}

    def schema(self, node: PlanNode) -> tuple[DataType, ...]:
        key = id(node)
        if key not in self._schemas:
            self._derive(node)
        return self._schemas[key]

    def origins(self, node: PlanNode) -> tuple:
        """Per output column: (table, column-name) of the base column it
        passes through, or None for computed values."""
        key = id(node)
        if key not in self._origins:
            self._derive(node)
        return self._origins[key]

    def _derive(self, node: PlanNode) -> None:
        for c in node.children:
            self.schema(c)
        schema: tuple
        origins: tuple
        if node.op == "read":
            if node.inline_schema is not None:
                schema = tuple(node.inline_schema)
                origins = tuple(None for _ in schema)
            else:
                meta = self.catalog.table(node.table)
                schema = tuple(t for (_, t) in meta.columns)
                origins = tuple((node.table, n) for (n, _) in meta.columns)
        elif node.op in ("filter", "sort", "limit"):
            schema = self.schema(node.children[0])
            origins = self.origins(node.children[0])
        elif node.op == "project":
            child = node.children[0]
            cs, co = self.schema(child), self.origins(child)
            schema = tuple(expr_type(e, cs) for e in node.exprs)
            origins = tuple(co[e.ordinal] if e.expr == "col" else None
                            for e in node.exprs)
        elif node.op == "join":
            l, r = node.children
            ls, rs = self.schema(l), self.schema(r)
            lo, ro = self.origins(l), self.origins(r)
            if node.join_type in ("left_semi", "left_anti"):
                schema, origins = ls, lo
            else:
                jr = node.join_type
                ls2 = tuple(t.with_nullable(True) for t in ls) \
                    if jr in ("right", "full") else ls
                rs2 = tuple(t.with_nullable(True) for t in rs) \
                    if jr in ("left", "full") else rs
                schema, origins = ls2 + rs2, lo + ro
        elif node.op == "aggregate":
            child = node.children[0]
            cs, co = self.schema(child), self.origins(child)
            key_types = tuple(cs[k] for k in node.group_keys)
            key_origins = tuple(co[k] for k in node.group_keys)
            m_types = tuple(measure_type(m, cs) for m in node.measures)
            schema = key_types + m_types
            origins = key_origins + tuple(None for _ in m_types)
        elif node.op == "union_all":
            schema = self.schema(node.children[0])
            origins = self.origins(node.children[0])
        else:
            raise ValueError(f"unknown op {node.op}")
        self._schemas[id(node)] = schema
        self._origins[id(node)] = origins


def validate_plan(doc: PlanDocument, catalog) -> ValidationReport:
    """Structural, resolution, and type validation; collects all errors."""
    errors: list[ValidationError] = []
    ctx = SchemaContext(catalog)

    def fail(path, code, message):
        errors.append(ValidationError(path, code, message))

    def visit(node: PlanNode, path: str) -> Optional[tuple]:
        if node.op not in LOGICAL_OPS:
            fail(path, "MalformedTree", f"unknown op {node.op!r}")
            return None
        expected = _CHILD_COUNTS[node.op]
        if len(node.children) != expected:
            fail(path, "MalformedTree",
                 f"{node.op} expects {expected} children, got {len(node.children)}")
            return None
        child_schemas = []
        for i, c in enumerate(node.children):
            s = visit(c, f"{path}.children[{i}]")
            if s is None:
                return None
            child_schemas.append(s)

        if node.op == "read":
            if node.table in (EMPTY_TABLE, BRIDGE_TABLE):
                if node.inline_schema is None:
                    fail(path, "MalformedTree",
                         f"{node.table} read requires an inline schema")
                    return None
            else:
                try:
                    catalog.table(node.table)
                except Exception:
                    fail(path, "UnknownTable", f"table {node.table!r} not in catalog")
                    return None
        elif node.op == "filter":
            try:
                t = expr_type(node.predicate, child_schemas[0])
                if t.kind != "bool":
                    fail(path + ".predicate", "TypeMismatch",
                         f"predicate has type {t.kind}, expected bool")
                    return None
            except ExprTypeError as e:
                fail(path + ".predicate", _type_error_code(e), str(e))
                return None
        elif node.op == "project":
            for j, e in enumerate(node.exprs):
                try:
                    expr_type(e, child_schemas[0])
                except ExprTypeError as ex:
                    fail(f"{path}.exprs[{j}]", _type_error_code(ex), str(ex))
                    return None
        elif node.op == "join":
            if node.join_type not in JOIN_TYPES:
                fail(path, "MalformedTree", f"bad join type {node.join_type!r}")
                return None
            if node.condition is not None:
                joined = child_schemas[0] + child_schemas[1]
                try:
                    t = expr_type(node.condition, joined)
                    if t.kind != "bool":
                        fail(path + ".condition", "TypeMismatch",
                             "join condition must be boolean")
                        return None
                except ExprTypeError as e:
                    fail(path + ".condition", _type_error_code(e), str(e))
                    return None
        elif node.op == "aggregate":
            w = len(child_schemas[0])
            for k in node.group_keys:
                if not (0 <= k < w):
                    fail(path, "OrdinalOutOfRange",
                         f"group key {k} out of range (width {w})")
                    return None
            for j, m in enumerate(node.measures):
                try:
                    measure_type(m, child_schemas[0])
                except ExprTypeError as e:
                    fail(f"{path}.measures[{j}]", _type_error_code(e), str(e))
                    return None
        elif node.op == "sort":
            w = len(child_schemas[0])
            for k in node.sort_keys:
                if not (0 <= k.ordinal < w):
                    fail(path, "OrdinalOutOfRange",
                         f"sort key {k.ordinal} out of range (width {w})")
                    return None
                if k.dir not in ("asc", "desc"):
                    fail(path, "MalformedTree", f"bad sort direction {k.dir!r}")
                    return None
        elif node.op == "union_all":
            a, b = child_schemas
            if len(a) != len(b) or any(not x.same_shape(y) or x.nullable != y.nullable
                                       for x, y in zip(a, b)):
                fail(path, "TypeMismatch", "union_all children schemas differ")
                return None
        elif node.op == "limit":
            if node.count is None or node.count < 0:
                fail(path, "MalformedTree", "limit count must be >= 0")
                return None

        if node.annotation is not None:
            ann = node.annotation
            if ann.op not in ANNOTATION_COMPAT.get(node.op, ()):
                fail(path, "MalformedTree",
                     f"annotation {ann.op} incompatible with {node.op}")
                return None
            if ann.op in EXCHANGE_OPS and node.op == "project":
                w = len(child_schemas[0])
                identity = (len(node.exprs) == w and all(
                    e.expr == "col" and e.ordinal == i
                    for i, e in enumerate(node.exprs)))
                if not identity:
                    fail(path, "MalformedTree",
                         "exchange annotations require an identity projection")
                    return None
            if ann.op == "stream_aggregate" and not ann.hint_only:
                if not _provides_sorted_prefix(node.children[0], node.group_keys):
                    fail(path, "MalformedTree",
                         "stream_aggregate requires input sorted on group keys")
                    return None
        try:
            return ctx.schema(node)
        except ExprTypeError as e:
            fail(path, _type_error_code(e), str(e))
            return None

    if doc.version != IR_VERSION:
        fail("version", "MalformedTree",
             f"unsupported version {doc.version!r}")
    visit(doc.root, "root")
    return ValidationReport(ok=not errors, errors=errors)


def _type_error_code(e: ExprTypeError) -> str:
    msg = str(e)
    if "out of range" in msg:
        return "OrdinalOutOfRange"
    if "expects" in msg and "args" in msg:
        return "ArityMismatch"
    return "TypeMismatch"


def _provides_sorted_prefix(node: PlanNode, keys: tuple) -> bool:
    """True when the subtree visibly delivers rows sorted on ``keys``:
    a sort whose key prefix covers them, looked up through order-preserving
    operators."""
    want = tuple(keys)
    if not want:
        return True
    n = node
    while True:
        if n.op == "sort":
            have = tuple(k.ordinal for k in n.sort_keys)
            return have[:len(want)] == want
        if n.op in ("filter", "limit"):
            n = n.children[0]
            continue
        if n.op == "project" and all(e.expr == "col" for e in n.exprs):
            mapping = {i: e.ordinal for i, e in enumerate(n.exprs)}
            if any(k not in mapping for k in want):
                return False
            want = tuple(mapping[k] for k in want)
            n = n.children[0]
            continue
        return False


def require_valid(doc: PlanDocument, catalog) -> ValidationReport:
    from .errors import InvalidPlan
    report = validate_plan(doc, catalog)
    if not report.ok:
        raise InvalidPlan(report)
    return report
