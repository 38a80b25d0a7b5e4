"""Per-engine physical planning for logical and hinted plan documents.

This is each toy engine's own (deliberately simple) physical planner: it
assigns default implementations, inserts the exchanges a partitioned
engine needs, and treats optimizer hints as mandatory, mirroring a
consuming engine that generates exactly the hinted physical plans.
"""

from __future__ import annotations

from dataclasses import replace

from .. import cardinality, ir
from ..errors import UnsupportedOperator

SINGLETON = "singleton"
ARBITRARY = "arbitrary"
BROADCAST = "broadcast"


def _hash_dist(keys) -> tuple:
    return ("hash", tuple(keys))


class _Planner:
    def __init__(self, catalog, engine_id):
        self.catalog = catalog
        self.profile = catalog.engine(engine_id)
        self.engine = engine_id
        self.ctx = ir.SchemaContext(catalog)

    def ann(self, op, **kw) -> ir.PhysicalAnnotation:
        if not self.profile.supports_op(op):
            raise UnsupportedOperator(f"{op} not supported by {self.engine}")
        return ir.PhysicalAnnotation(op=op, engine=self.engine, **kw)

    def identity_exchange(self, child: ir.PlanNode, op: str,
                          hash_ordinals=None) -> ir.PlanNode:
        width = len(self.ctx.schema(child))
        node = ir.project([ir.col(i) for i in range(width)], child)
        return node.with_annotation(self.ann(
            op, enforcer=True,
            hash_ordinals=tuple(hash_ordinals) if hash_ordinals is not None else None))

    def gather(self, child: ir.PlanNode, dist) -> tuple[ir.PlanNode, str]:
        if dist == SINGLETON:
            return child, SINGLETON
        return self.identity_exchange(child, "gather_exchange"), SINGLETON

    def plan(self, node: ir.PlanNode):
        """Returns (annotated node, distribution state)."""
        P = self.profile.partition_count
        if node.op == "read":
            dist = SINGLETON if P == 1 else ARBITRARY
            return node.with_annotation(self.ann("table_scan")), dist
        if node.op == "filter":
            child, dist = self.plan(node.children[0])
            return replace(node, children=(child,),
                           annotation=self.ann("filter_exec")), dist
        if node.op == "project":
            child, dist = self.plan(node.children[0])
            exprs_cols = [e.ordinal for e in node.exprs if e.expr == "col"]
            if isinstance(dist, tuple) and not all(
                    k in exprs_cols for k in dist[1]):
                dist = ARBITRARY
            elif isinstance(dist, tuple):
                remap = {e.ordinal: i for i, e in enumerate(node.exprs)
                         if e.expr == "col"}
                dist = _hash_dist(remap[k] for k in dist[1])
            return replace(node, children=(child,),
                           annotation=self.ann("project_exec")), dist
        if node.op == "join":
            return self.plan_join(node)
        if node.op == "aggregate":
            return self.plan_aggregate(node)
        if node.op == "sort":
            child, dist = self.plan(node.children[0])
            child, dist = self.gather(child, dist)
            return replace(node, children=(child,),
                           annotation=self.ann("sort_exec")), SINGLETON
        if node.op == "union_all":
            l, dl = self.plan(node.children[0])
            r, dr = self.plan(node.children[1])
            dist = SINGLETON if (dl == SINGLETON and dr == SINGLETON) else ARBITRARY
            return replace(node, children=(l, r),
                           annotation=self.ann("union_all_exec")), dist
        if node.op == "limit":
            child, dist = self.plan(node.children[0])
            child, dist = self.gather(child, dist)
            return replace(node, children=(child,),
                           annotation=self.ann("limit_exec")), SINGLETON
        raise ValueError(f"unknown op {node.op}")

    def plan_join(self, node: ir.PlanNode):
        left, right = node.children
        lw = len(self.ctx.schema(left))
        equi, _ = cardinality.classify_join_condition(node.condition, lw)
        hint = node.annotation if node.annotation is not None \
            and node.annotation.hint_only else None
        P = self.profile.partition_count

        impl = hint.op if hint else None
        if impl is None:
            if equi:
                impl = "hash_join" if self.profile.supports_op("hash_join") \
                    else "sort_merge_join"
            elif self.profile.supports_op("nested_loop_join"):
                impl = "nested_loop_join"
            else:
                raise UnsupportedOperator(
                    f"non-equi join needs nested_loop_join, absent on {self.engine}")
        build_side = (hint.build_side if hint and hint.build_side else "right")
        exchange = hint.exchange if hint else None

        lchild, ldist = self.plan(left)
        rchild, rdist = self.plan(right)

        if P > 1:
            if not equi and exchange != "broadcast":
                raise UnsupportedOperator(
                    f"partitioned join without equi keys on {self.engine}")
            if exchange == "broadcast":
                bchild = lchild if build_side == "left" else rchild
                bcast = self.identity_exchange(bchild, "broadcast_exchange")
                if build_side == "left":
                    lchild, ldist = bcast, BROADCAST
                else:
                    rchild, rdist = bcast, BROADCAST
            else:
                lkeys = tuple(o for (o, _) in equi)
                rkeys = tuple(o for (_, o) in equi)
                if ldist != _hash_dist(lkeys):
                    lchild = self.identity_exchange(lchild, "shuffle_exchange", lkeys)
                    ldist = _hash_dist(lkeys)
                if rdist != _hash_dist(rkeys):
                    rchild = self.identity_exchange(rchild, "shuffle_exchange", rkeys)
                    rdist = _hash_dist(rkeys)

        if impl == "sort_merge_join":
            lkeys = [ir.SortKey(o) for (o, _) in equi]
            rkeys = [ir.SortKey(o) for (_, o) in equi]
            lchild = ir.sort(lkeys, lchild).with_annotation(self.ann("sort_exec"))
            rchild = ir.sort(rkeys, rchild).with_annotation(self.ann("sort_exec"))

        ann = self.ann(impl, build_side=build_side if impl == "hash_join" else None)
        out = replace(node, children=(lchild, rchild), annotation=ann)
        if P == 1:
            return out, SINGLETON
        if exchange == "broadcast":
            dist = rdist if build_side == "left" else ldist
            return out, dist if isinstance(dist, tuple) else ARBITRARY
        if node.join_type in ("inner", "left", "left_semi", "left_anti"):
            return out, _hash_dist(o for (o, _) in equi)
        return out, ARBITRARY

    def plan_aggregate(self, node: ir.PlanNode):
        child, dist = self.plan(node.children[0])
        keys = node.group_keys
        P = self.profile.partition_count
        if not keys:
            child, dist = self.gather(child, dist)
        elif P > 1 and dist != _hash_dist(keys):
            child = self.identity_exchange(child, "shuffle_exchange", keys)
            dist = _hash_dist(keys)
        impl = "hash_aggregate"
        if self.profile.supports_op("stream_aggregate") and \
                ir._provides_sorted_prefix(child, keys):
            impl = "stream_aggregate"
        out = replace(node, children=(child,), annotation=self.ann(impl))
        if not keys:
            return out, SINGLETON
        if P == 1:
            return out, SINGLETON
        return out, _hash_dist(range(len(keys)))


def plan_for_engine(doc: ir.PlanDocument, engine_id: str, catalog,
                    require_singleton: bool = True) -> ir.PlanDocument:
    """Physical plan for one engine; optimizer hints are honored."""
    planner = _Planner(catalog, engine_id)
    root, dist = planner.plan(doc.root)
    if require_singleton:
        root, _ = planner.gather(root, dist)
    return ir.PlanDocument(root=root, query_id=doc.query_id,
                           extensions=doc.extensions, engine=engine_id)
