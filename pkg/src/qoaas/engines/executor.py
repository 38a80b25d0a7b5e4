"""Physical plan execution over in-memory partitions.

The executor trusts plan structure (exchanges placed by the optimizer or
the per-engine planner) but verifies the engine capability profile on
every node: an operator outside the profile raises UnsupportedOperator
rather than silently running.

Data flows as per-partition row lists. A "singleton" state means all rows
sit in one partition; exchanges move between states. Runtime-units per
node come from the cost formulas applied to actual row counts with the
engine's hidden true weights.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field

from .. import cardinality, costmodel, ir, scalars
from ..errors import DataMissing, UnsupportedOperator
from .weights import true_params_for


@dataclass
class NodeMetric:
    path: str
    logical_op: str
    physical_op: str
    engine: str
    fragment_digest: str
    actual_rows: float
    runtime_units: float


@dataclass
class ExecutionMetrics:
    per_node: list = field(default_factory=list)
    total_runtime_units: float = 0.0
    wall_time_s: float = 0.0

    def actuals_by_digest(self) -> dict:
        """Last-write-wins map of fragment digest -> actual rows."""
        return {m.fragment_digest: m.actual_rows for m in self.per_node}


@dataclass
class ExecutionResult:
    rows: list
    metrics: ExecutionMetrics


def stable_hash(values: tuple) -> int:
    return zlib.crc32(repr(values).encode("utf-8"))


@dataclass
class _State:
    partitions: list          # list of row lists, length = partition count
    singleton: bool

    @property
    def rows(self) -> list:
        out = []
        for p in self.partitions:
            out.extend(p)
        return out

    @property
    def count(self) -> int:
        return sum(len(p) for p in self.partitions)


class _SegmentRunner:
    def __init__(self, catalog, profile, true_params, metrics, bridge_rows,
                 bridge_logical, prefix):
        self.catalog = catalog
        self.profile = profile
        self.params = true_params
        self.metrics = metrics
        self.bridge_rows = bridge_rows
        self.bridge_logical = bridge_logical
        self.prefix = prefix
        self.ctx = ir.SchemaContext(catalog)
        self._logical_cache: dict[int, ir.PlanNode] = {}

    # -- logical projection for fragment digests (bridge reads splice in
    #    the producer's logical tree so digests line up across segments)

    def logical_of(self, node: ir.PlanNode) -> ir.PlanNode:
        key = id(node)
        if key in self._logical_cache:
            return self._logical_cache[key]
        if node.op == "read" and node.table == ir.BRIDGE_TABLE:
            out = self.bridge_logical[node.bridge_id]
        else:
            children = tuple(self.logical_of(c) for c in node.children)
            out = node.with_children(children).with_annotation(None)
        self._logical_cache[key] = out
        return out

    def run(self, node: ir.PlanNode, path: str) -> _State:
        ann = node.annotation
        if ann is None or ann.hint_only:
            raise UnsupportedOperator(
                f"{path}: node {node.op} is not physically annotated")
        if not self.profile.supports_op(ann.op):
            raise UnsupportedOperator(
                f"{path}: {ann.op} not supported by engine "
                f"{self.profile.engine_id}")
        children = [self.run(c, f"{path}.children[{i}]")
                    for i, c in enumerate(node.children)]
        out = self._apply(node, ann, children, path)
        self._record(node, ann, children, out, path)
        return out

    def _record(self, node, ann, children, out, path):
        width = ir.row_width(self.ctx.schema(node))
        est_in = tuple(float(c.count) for c in children)
        # broadcast duplicates rows physically; the logical cardinality of
        # the fragment is the input count
        actual = est_in[0] if ann.op == "broadcast_exchange" else float(out.count)
        n_conjuncts, n_exprs = costmodel.shape_of_node(node)
        units = costmodel.cost_operator(
            ann, est_in, actual, width, self.params,
            self.profile.partition_count, n_conjuncts, n_exprs)
        digest = ir.fragment_digest(
            ir.resolve_reads(self.logical_of(node), self.catalog))
        self.metrics.per_node.append(NodeMetric(
            path=self.prefix + path, logical_op=node.op, physical_op=ann.op,
            engine=self.profile.engine_id, fragment_digest=digest,
            actual_rows=actual, runtime_units=units))
        self.metrics.total_runtime_units += units

    # -- operators

    def _apply(self, node, ann, children, path) -> _State:
        P = self.profile.partition_count
        op = ann.op
        if op == "table_scan":
            return self._scan(node)
        if op == "filter_exec":
            child = node.children[0]
            cs = self.ctx.schema(child)
            st = children[0]
            parts = [[r for r in p
                      if scalars.eval_scalar(node.predicate, r, cs) is True]
                     for p in st.partitions]
            return _State(parts, st.singleton)
        if op == "project_exec":
            child = node.children[0]
            cs = self.ctx.schema(child)
            st = children[0]
            parts = [[tuple(scalars.eval_scalar(e, r, cs) for e in node.exprs)
                      for r in p] for p in st.partitions]
            return _State(parts, st.singleton)
        if op in ("shuffle_exchange", "broadcast_exchange", "gather_exchange"):
            return self._exchange(op, ann, children[0], P)
        if op in ("hash_join", "sort_merge_join", "nested_loop_join"):
            return self._join(node, ann, children, path)
        if op in ("hash_aggregate", "stream_aggregate"):
            return self._aggregate(node, ann, children[0], path)
        if op == "sort_exec":
            st = children[0]
            keys = node.sort_keys

            def key_fn(row):
                return tuple(scalars.sort_key(row[k.ordinal], k.dir == "desc")
                             for k in keys)
            return _State([sorted(p, key=key_fn) for p in st.partitions],
                          st.singleton)
        if op == "union_all_exec":
            a, b = children
            width = max(len(a.partitions), len(b.partitions))

            def pad(st):
                ps = [list(p) for p in st.partitions]
                while len(ps) < width:
                    ps.append([])
                return ps
            pa, pb = pad(a), pad(b)
            return _State([pa[i] + pb[i] for i in range(width)],
                          a.singleton and b.singleton)
        if op == "limit_exec":
            st = children[0]
            if not st.singleton:
                raise UnsupportedOperator(f"{path}: limit over partitioned input")
            return _State([st.partitions[0][:node.count]], True)
        raise UnsupportedOperator(f"{path}: no executor for {op}")

    def _scan(self, node) -> _State:
        P = self.profile.partition_count
        if node.table == ir.EMPTY_TABLE:
            rows = []
        elif node.table == ir.BRIDGE_TABLE:
            if node.bridge_id not in self.bridge_rows:
                raise DataMissing(f"bridge {node.bridge_id} not materialized")
            rows = list(self.bridge_rows[node.bridge_id])
        else:
            if not self.catalog.has_data(node.table):
                raise DataMissing(f"table {node.table} has no data loaded")
            rows = list(self.catalog.data(node.table))
        if P == 1:
            return _State([rows], True)
        parts = [[] for _ in range(P)]
        for i, r in enumerate(rows):
            parts[i % P].append(r)
        return _State(parts, False)

    def _exchange(self, op, ann, st: _State, P: int) -> _State:
        rows = st.rows
        if op == "gather_exchange":
            return _State([rows], True)
        if op == "broadcast_exchange":
            return _State([list(rows) for _ in range(P)], P == 1)
        keys = ann.hash_ordinals or ()
        parts = [[] for _ in range(P)]
        for r in rows:
            h = stable_hash(tuple(r[k] for k in keys)) % P
            parts[h].append(r)
        return _State(parts, P == 1)

    # -- joins

    def _join(self, node, ann, children, path) -> _State:
        left, right = node.children
        ls, rs = self.ctx.schema(left), self.ctx.schema(right)
        joined = ls + rs
        jt = node.join_type
        cond = node.condition
        equi, _residual = cardinality.classify_join_condition(cond, len(ls))
        lst, rst = children

        if ann.op == "nested_loop_join" and not lst.singleton:
            raise UnsupportedOperator(f"{path}: partitioned nested loop join")
        if ann.op in ("hash_join", "sort_merge_join") and not equi \
                and jt != "inner" and cond is not None:
            raise UnsupportedOperator(f"{path}: {ann.op} without equi keys")

        def matches(lr, rr) -> bool:
            if cond is None:
                return True
            return scalars.eval_scalar(cond, lr + rr, joined) is True

        nparts = max(len(lst.partitions), len(rst.partitions))

        def part(st, i):
            return st.partitions[i] if i < len(st.partitions) else []

        out_parts = []
        for i in range(nparts):
            lrows, rrows = part(lst, i), part(rst, i)
            out_parts.append(self._join_partition(
                ann, jt, equi, matches, lrows, rrows, len(ls), len(rs)))
        return _State(out_parts, lst.singleton and rst.singleton)

    def _join_partition(self, ann, jt, equi, matches, lrows, rrows, lw, rw):
        """One partition's worth of join output. Hash and merge joins use
        equi keys for candidate matching when available; full condition
        evaluation decides each pair."""
        out = []
        use_keys = bool(equi) and ann.op in ("hash_join", "sort_merge_join")
        if use_keys:
            lkeys = [tuple(r[o] for (o, _) in equi) for r in lrows]
            rkeys = [tuple(r[o] for (_, o) in equi) for r in rrows]
            index: dict = {}
            for j, k in enumerate(rkeys):
                if any(v is None for v in k):
                    continue
                index.setdefault(k, []).append(j)

            rmatched = [False] * len(rrows)
            for i, lr in enumerate(lrows):
                k = lkeys[i]
                hit = False
                if not any(v is None for v in k):
                    for j in index.get(k, ()):
                        if matches(lr, rrows[j]):
                            hit = True
                            rmatched[j] = True
                            if jt in ("inner", "left", "right", "full"):
                                out.append(lr + rrows[j])
                if jt in ("left", "full") and not hit:
                    out.append(lr + (None,) * rw)
                elif jt == "left_semi" and hit:
                    out.append(lr)
                elif jt == "left_anti" and not hit:
                    out.append(lr)
            if jt in ("right", "full"):
                for j, rr in enumerate(rrows):
                    if not rmatched[j]:
                        out.append((None,) * lw + rr)
            return out

        # no usable keys: quadratic matching (nested loop, cross joins)
        rmatched = [False] * len(rrows)
        for lr in lrows:
            hit = False
            for j, rr in enumerate(rrows):
                if matches(lr, rr):
                    hit = True
                    rmatched[j] = True
                    if jt in ("inner", "left", "right", "full"):
                        out.append(lr + rr)
            if jt in ("left", "full") and not hit:
                out.append(lr + (None,) * rw)
            elif jt == "left_semi" and hit:
                out.append(lr)
            elif jt == "left_anti" and not hit:
                out.append(lr)
        if jt in ("right", "full"):
            for j, rr in enumerate(rrows):
                if not rmatched[j]:
                    out.append((None,) * lw + rr)
        return out

    # -- aggregates

    def _aggregate(self, node, ann, st: _State, path) -> _State:
        child = node.children[0]
        cs = self.ctx.schema(child)
        keys = node.group_keys
        measure_types = [ir.measure_type(m, cs) for m in node.measures]
        if not keys and not st.singleton:
            raise UnsupportedOperator(
                f"{path}: global aggregate over partitioned input")

        def agg_partition(rows):
            groups: dict = {}
            order = []
            seen_done = set()
            current = object()
            for r in rows:
                k = tuple(r[i] for i in keys)
                if ann.op == "stream_aggregate":
                    if k != current:
                        if k in seen_done:
                            raise UnsupportedOperator(
                                f"{path}: stream aggregate input not grouped")
                        seen_done.add(k)
                        current = k
                if k not in groups:
                    groups[k] = [scalars.Accumulator(m.fn, t)
                                 for m, t in zip(node.measures, measure_types)]
                    order.append(k)
                for m, acc in zip(node.measures, groups[k]):
                    if m.fn == "count_star":
                        acc.add(None)
                    else:
                        acc.add(scalars.eval_scalar(m.args[0], r, cs))
            if not keys and not rows:
                accs = [scalars.Accumulator(m.fn, t)
                        for m, t in zip(node.measures, measure_types)]
                return [tuple(a.result() for a in accs)]
            return [k + tuple(a.result() for a in groups[k]) for k in order]

        return _State([agg_partition(p) for p in st.partitions], st.singleton)


def _order_segments(segments: list) -> list:
    """Producers before consumers; the final (no out_bridge) segment last."""
    remaining = list(segments)
    ordered = []
    available: set = set()
    while remaining:
        progressed = False
        for seg in list(remaining):
            needs = _bridge_reads(seg.root)
            if needs <= available:
                ordered.append(seg)
                remaining.remove(seg)
                if seg.out_bridge:
                    available.add(seg.out_bridge)
                progressed = True
        if not progressed:
            raise DataMissing("segment bridge dependencies do not resolve")
    return ordered


def _bridge_reads(node: ir.PlanNode) -> set:
    out = set()
    if node.op == "read" and node.table == ir.BRIDGE_TABLE:
        out.add(node.bridge_id)
    for c in node.children:
        out |= _bridge_reads(c)
    return out


def execute(plans, catalog, true_weights_path=None) -> ExecutionResult:
    """Run one fully annotated document or a list of bridge-wired segments.

    Returns the final segment's rows plus per-node metrics across all
    segments (bridges included as synthetic nodes).
    """
    segments = plans if isinstance(plans, list) else [plans]
    segments = _order_segments(segments)
    metrics = ExecutionMetrics()
    bridge_rows: dict = {}
    bridge_logical: dict = {}
    started = time.perf_counter()
    final_rows: list = []

    for idx, seg in enumerate(segments):
        engine_id = seg.engine or _infer_engine(seg.root)
        profile = catalog.engine(engine_id)
        tp = true_params_for(catalog, engine_id)
        if true_weights_path is not None:
            from .weights import load_true_weights
            from .. import params as params_mod
            weights = load_true_weights(true_weights_path).get(engine_id, {})
            tp = params_mod.defaults("true").replace(provenance="true", **weights)
        runner = _SegmentRunner(catalog, profile, tp, metrics, bridge_rows,
                                bridge_logical, prefix=f"seg{idx}:")
        state = runner.run(seg.root, "root")
        rows = state.rows
        logical = ir.resolve_reads(runner.logical_of(seg.root), catalog)
        if seg.out_bridge:
            bridge_rows[seg.out_bridge] = rows
            bridge_logical[seg.out_bridge] = logical
            # bridge transfer work, charged with the producer's weights
            width = ir.row_width(runner.ctx.schema(seg.root))
            ann = ir.PhysicalAnnotation(op="engine_bridge", engine=engine_id,
                                        from_engine=engine_id)
            units = costmodel.cost_operator(
                ann, (float(len(rows)),), float(len(rows)), width, tp,
                profile.partition_count)
            metrics.per_node.append(NodeMetric(
                path=f"seg{idx}:bridge:{seg.out_bridge}", logical_op="project",
                physical_op="engine_bridge", engine=engine_id,
                fragment_digest=ir.fragment_digest(logical),
                actual_rows=float(len(rows)), runtime_units=units))
            metrics.total_runtime_units += units
        else:
            final_rows = rows

    metrics.wall_time_s = time.perf_counter() - started
    return ExecutionResult(rows=final_rows, metrics=metrics)


def _infer_engine(node: ir.PlanNode) -> str:
    if node.annotation is not None and node.annotation.engine:
        return node.annotation.engine
    for c in node.children:
        try:
            return _infer_engine(c)
        except ValueError:
            continue
    raise ValueError("cannot infer engine from plan annotations")
