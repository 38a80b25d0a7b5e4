"""Naive tuple-at-a-time evaluator: the semantics oracle.

No optimization, no partitioning; three-valued logic throughout. Results
are row multisets (order carries no meaning except through sort+limit).
"""

from __future__ import annotations

from collections import Counter

from .. import ir, scalars
from ..errors import DataMissing


def reference_eval(doc_or_node, catalog, bridge_rows=None):
    """Evaluate a logical plan; returns a list of row tuples."""
    node = doc_or_node.root if isinstance(doc_or_node, ir.PlanDocument) \
        else doc_or_node
    ctx = ir.SchemaContext(catalog)
    bridge_rows = bridge_rows or {}

    def null_row(width):
        return (None,) * width

    def eval_node(n: ir.PlanNode) -> list:
        if n.op == "read":
            if n.table == ir.EMPTY_TABLE:
                return []
            if n.table == ir.BRIDGE_TABLE:
                if n.bridge_id not in bridge_rows:
                    raise DataMissing(f"bridge {n.bridge_id} has no rows")
                return list(bridge_rows[n.bridge_id])
            if not catalog.has_data(n.table):
                raise DataMissing(f"table {n.table} has no data loaded")
            return list(catalog.data(n.table))
        if n.op == "filter":
            child = n.children[0]
            cs = ctx.schema(child)
            rows = eval_node(child)
            return [r for r in rows
                    if scalars.eval_scalar(n.predicate, r, cs) is True]
        if n.op == "project":
            child = n.children[0]
            cs = ctx.schema(child)
            return [tuple(scalars.eval_scalar(e, r, cs) for e in n.exprs)
                    for r in eval_node(child)]
        if n.op == "join":
            return eval_join(n)
        if n.op == "aggregate":
            return eval_aggregate(n)
        if n.op == "sort":
            child = n.children[0]
            rows = eval_node(child)
            keys = n.sort_keys

            def key_fn(row):
                return tuple(scalars.sort_key(row[k.ordinal], k.dir == "desc")
                             for k in keys)
            return sorted(rows, key=key_fn)
        if n.op == "union_all":
            return eval_node(n.children[0]) + eval_node(n.children[1])
        if n.op == "limit":
            return eval_node(n.children[0])[:n.count]
        raise ValueError(f"unknown op {n.op}")

    def eval_join(n: ir.PlanNode) -> list:
        left, right = n.children
        lrows, rrows = eval_node(left), eval_node(right)
        ls, rs = ctx.schema(left), ctx.schema(right)
        joined_schema = ls + rs
        cond = n.condition

        def matches(lr, rr) -> bool:
            if cond is None:
                return True
            return scalars.eval_scalar(cond, lr + rr, joined_schema) is True

        jt = n.join_type
        out = []
        if jt in ("inner", "left", "right", "full"):
            rmatched = [False] * len(rrows)
            for lr in lrows:
                hit = False
                for j, rr in enumerate(rrows):
                    if matches(lr, rr):
                        out.append(lr + rr)
                        hit = True
                        rmatched[j] = True
                if not hit and jt in ("left", "full"):
                    out.append(lr + null_row(len(rs)))
            if jt in ("right", "full"):
                for j, rr in enumerate(rrows):
                    if not rmatched[j]:
                        out.append(null_row(len(ls)) + rr)
            return out
        if jt in ("left_semi", "left_anti"):
            want = jt == "left_semi"
            for lr in lrows:
                hit = any(matches(lr, rr) for rr in rrows)
                if hit == want:
                    out.append(lr)
            return out
        raise ValueError(jt)

    def eval_aggregate(n: ir.PlanNode) -> list:
        child = n.children[0]
        cs = ctx.schema(child)
        rows = eval_node(child)
        keys = n.group_keys
        measure_types = [ir.measure_type(m, cs) for m in n.measures]
        groups: dict = {}
        order = []
        for r in rows:
            k = tuple(r[i] for i in keys)
            if k not in groups:
                groups[k] = [scalars.Accumulator(m.fn, t)
                             for m, t in zip(n.measures, measure_types)]
                order.append(k)
            accs = groups[k]
            for m, acc in zip(n.measures, accs):
                if m.fn == "count_star":
                    acc.add(None)
                else:
                    acc.add(scalars.eval_scalar(m.args[0], r, cs))
        if not keys and not rows:
            # global aggregate over empty input still yields one row
            accs = [scalars.Accumulator(m.fn, t)
                    for m, t in zip(n.measures, measure_types)]
            return [tuple(a.result() for a in accs)]
        return [k + tuple(a.result() for a in groups[k]) for k in order]

    return eval_node(node)


def rows_multiset(rows) -> Counter:
    """Hashable multiset view for comparisons in tests."""
    return Counter(tuple(r) for r in rows)
