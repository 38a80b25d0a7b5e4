"""The memo: groups of logically equivalent expressions over global column
ids.

Inside the memo, expressions reference columns by optimization-wide unique
ids instead of positions. Join reordering then needs no ordinal remapping:
a group's output is a set of ids, and column order becomes a pure
extraction concern. Reads are never deduplicated (two scans of one table
are distinct relations with distinct ids), everything else is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

from .. import cardinality, ir
from ..errors import MemoInternalError


@dataclass(frozen=True)
class ColumnInfo:
    col_id: int
    dtype: ir.DataType
    origin: Optional[tuple]   # (table, column) for base columns


@dataclass
class GroupExpression:
    op: str
    children: tuple = ()                   # group ids (resolve via memo.find)
    table: Optional[str] = None
    inline_schema: Optional[tuple] = None
    predicate: Optional[ir.Expression] = None    # id-space expressions
    exprs: Optional[tuple] = None
    out_ids: tuple = ()                    # natural output id order
    join_type: Optional[str] = None
    condition: Optional[ir.Expression] = None
    group_keys: Optional[tuple] = None     # ids
    measures: Optional[tuple] = None
    sort_keys: Optional[tuple] = None      # (id, dir)
    count: Optional[int] = None
    group_id: int = -1
    fired_rules: set = field(default_factory=set)


@dataclass
class Group:
    gid: int
    out_ids: tuple
    expressions: list = field(default_factory=list)
    rep_tree: Optional[ir.PlanNode] = None   # concrete logical tree, digests
    digest: Optional[str] = None
    est_rows: Optional[float] = None
    card_override: Optional[float] = None
    explored: bool = False
    winners: dict = field(default_factory=dict)
    merged_into: Optional[int] = None


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@lru_cache(maxsize=1 << 16)
def _cached_expr_key(e: ir.Expression) -> str:
    # expressions are immutable and hashable; identical conjuncts recur
    # across thousands of derived join conditions during exploration
    return _canon(ir._canon_expr(e))


def _expr_key(e: Optional[ir.Expression]):
    return None if e is None else _cached_expr_key(e)


def _condset_key(cond: Optional[ir.Expression]):
    return tuple(sorted(_cached_expr_key(c)
                        for c in ir.split_conjuncts(cond)))


class Memo:
    def __init__(self, catalog, overrides=None):
        self.catalog = catalog
        self.overrides = overrides or cardinality.CardinalityOverrides()
        self.groups: list[Group] = []
        self.columns: dict[int, ColumnInfo] = {}
        self._next_col = 0
        self._index: dict = {}
        self._read_seq = 0
        self.stats = {"groups": 0, "expressions": 0, "dedup_hits": 0,
                      "rule_firings": 0, "group_merges": 0, "tasks": 0}

    # -- columns

    def new_column(self, dtype: ir.DataType, origin=None) -> int:
        cid = self._next_col
        self._next_col += 1
        self.columns[cid] = ColumnInfo(cid, dtype, origin)
        return cid

    def dtype(self, cid: int) -> ir.DataType:
        return self.columns[cid].dtype

    def stats_for_id(self, cid: int):
        origin = self.columns[cid].origin
        if origin is None:
            return None
        return self.catalog.resolve_stats(origin[0], origin[1])

    def width_of_ids(self, ids) -> int:
        return sum(ir.width_of(self.columns[i].dtype) for i in ids)

    # -- group plumbing

    def find(self, gid: int) -> int:
        g = self.groups[gid]
        while g.merged_into is not None:
            gid = g.merged_into
            g = self.groups[gid]
        return gid

    def group(self, gid: int) -> Group:
        return self.groups[self.find(gid)]

    def _expr_dedup_key(self, e: GroupExpression):
        kids = tuple(self.find(c) for c in e.children)
        if e.op == "read":
            return ("read", e.table, e.out_ids)
        if e.op == "filter":
            return ("filter", _expr_key(e.predicate), kids)
        if e.op == "project":
            return ("project", tuple(_expr_key(x) for x in e.exprs), kids)
        if e.op == "join":
            pair = frozenset(kids) if e.join_type == "inner" else kids
            return ("join", e.join_type, pair, _condset_key(e.condition))
        if e.op == "aggregate":
            return ("aggregate", e.group_keys,
                    tuple(_expr_key(m) for m in e.measures), kids)
        if e.op == "sort":
            return ("sort", e.sort_keys, kids)
        if e.op == "union_all":
            return ("union_all", kids)
        if e.op == "limit":
            return ("limit", e.count, kids)
        raise MemoInternalError(f"bad op {e.op}")

    def insert_expression(self, expr: GroupExpression,
                          into: Optional[int] = None):
        """Dedup-aware insert. Returns (gid, expression, created_flag)."""
        key = self._expr_dedup_key(expr)
        hit = self._index.get(key)
        if hit is not None:
            gid = self.find(hit)
            if into is not None and self.find(into) != gid:
                gid = self._merge(self.find(into), gid)
            self.stats["dedup_hits"] += 1
            return gid, None, False
        if into is not None:
            gid = self.find(into)
        else:
            gid = len(self.groups)
            self.groups.append(Group(gid=gid, out_ids=expr.out_ids))
            self.stats["groups"] += 1
        expr.group_id = gid
        self.groups[gid].expressions.append(expr)
        self._index[key] = gid
        self.stats["expressions"] += 1
        return gid, expr, True

    def _merge(self, a: int, b: int) -> int:
        """Two groups turned out logically identical; keep the smaller id."""
        keep, drop = (a, b) if a < b else (b, a)
        kg, dg = self.groups[keep], self.groups[drop]
        if dg.winners or kg.winners:
            raise MemoInternalError("group merge after costing began")
        for e in dg.expressions:
            e.group_id = keep
            kg.expressions.append(e)
        if kg.card_override is None:
            kg.card_override = dg.card_override
        dg.expressions = []
        dg.merged_into = keep
        self.stats["group_merges"] += 1
        return keep

    # -- copy-in from the positional IR

    def copy_in(self, root: ir.PlanNode) -> tuple[int, tuple]:
        """Insert a validated logical tree; returns (root gid, output ids)."""
        ctx = ir.SchemaContext(self.catalog)

        def walk(node: ir.PlanNode) -> tuple[int, tuple]:
            schema = ctx.schema(node)
            origins = ctx.origins(node)
            if node.op == "read":
                # fresh ids per occurrence: two scans of one table stay
                # distinct relations, so self-joins keep their meaning
                ids = tuple(self.new_column(t, o)
                            for t, o in zip(schema, origins))
                expr = GroupExpression(op="read", table=node.table,
                                       inline_schema=node.inline_schema,
                                       out_ids=ids)
                gid, _, _ = self.insert_expression(expr)
                return self._finish_group(gid, node, ids)

            child_results = [walk(c) for c in node.children]
            kid_gids = tuple(g for (g, _) in child_results)
            kid_ids = [ids for (_, ids) in child_results]

            if node.op == "filter":
                pred = _to_ids(node.predicate, kid_ids[0])
                expr = GroupExpression(op="filter", children=kid_gids,
                                       predicate=pred, out_ids=kid_ids[0])
            elif node.op == "project":
                exprs = tuple(_to_ids(e, kid_ids[0]) for e in node.exprs)
                out = tuple(e.ordinal if e.expr == "col" else
                            self.new_column(schema[i], origins[i])
                            for i, e in enumerate(exprs))
                expr = GroupExpression(op="project", children=kid_gids,
                                       exprs=exprs, out_ids=out)
            elif node.op == "join":
                joined = kid_ids[0] + kid_ids[1]
                cond = _to_ids(node.condition, joined) \
                    if node.condition is not None else None
                out = kid_ids[0] if node.join_type in ("left_semi", "left_anti") \
                    else joined
                expr = GroupExpression(op="join", children=kid_gids,
                                       join_type=node.join_type,
                                       condition=cond, out_ids=out)
            elif node.op == "aggregate":
                keys = tuple(kid_ids[0][k] for k in node.group_keys)
                measures = tuple(_to_ids(m, kid_ids[0]) for m in node.measures)
                m_ids = tuple(self.new_column(schema[len(keys) + i], None)
                              for i in range(len(measures)))
                expr = GroupExpression(op="aggregate", children=kid_gids,
                                       group_keys=keys, measures=measures,
                                       out_ids=keys + m_ids)
            elif node.op == "sort":
                keys = tuple((kid_ids[0][k.ordinal], k.dir)
                             for k in node.sort_keys)
                expr = GroupExpression(op="sort", children=kid_gids,
                                       sort_keys=keys, out_ids=kid_ids[0])
            elif node.op == "union_all":
                # fresh ids, but keep the left branch's statistics origins
                # (matching concrete-tree origin derivation)
                out = tuple(self.new_column(t, self.columns[kid_ids[0][i]].origin)
                            for i, t in enumerate(schema))
                expr = GroupExpression(op="union_all", children=kid_gids,
                                       out_ids=out)
            elif node.op == "limit":
                expr = GroupExpression(op="limit", children=kid_gids,
                                       count=node.count, out_ids=kid_ids[0])
            else:
                raise MemoInternalError(f"unknown op {node.op}")

            gid, inserted, created = self.insert_expression(expr)
            group = self.groups[gid]
            if not created:
                return gid, group.out_ids
            return self._finish_group(gid, node, expr.out_ids)

        return walk(root)

    def _finish_group(self, gid: int, source: ir.PlanNode, ids: tuple):
        group = self.groups[gid]
        if group.rep_tree is None:
            group.rep_tree = source.with_annotation(None)
            if self.overrides.by_digest:
                group.digest = ir.fragment_digest(source, self.catalog)
                group.card_override = self.overrides.get(group.digest)
        return gid, ids

    # -- representative trees for rule-derived groups

    def build_rep_tree(self, expr: GroupExpression) -> ir.PlanNode:
        """Concrete logical tree for a derived expression, using child
        groups' representative trees."""
        kids = [self.group(c) for c in expr.children]
        kid_nodes = [k.rep_tree for k in kids]
        kid_ids = [k.out_ids for k in kids]
        node, _ = materialize(expr, kid_nodes, kid_ids)
        return node

    def register_group(self, expr: GroupExpression) -> int:
        """Find-or-create the group for a rule-derived expression."""
        gid, inserted, created = self.insert_expression(expr)
        group = self.groups[gid]
        if created and group.rep_tree is None:
            rep = self.build_rep_tree(expr)
            group.rep_tree = rep
            if self.overrides.by_digest:
                group.digest = ir.fragment_digest(rep, self.catalog)
                group.card_override = self.overrides.get(group.digest)
        return gid

    # -- cardinality (logical property of a group)

    def rows(self, gid: int) -> float:
        group = self.group(gid)
        if group.est_rows is not None:
            return group.est_rows
        if group.card_override is not None:
            group.est_rows = group.card_override
            return group.est_rows
        join_expr = self._region_expr(group)
        if join_expr is not None:
            group.est_rows = self._region_estimate(join_expr)
        else:
            group.est_rows = self._estimate(group.expressions[0])
        return group.est_rows

    def _region_expr(self, group: Group) -> Optional[GroupExpression]:
        """First inner-join expression; groups holding one estimate as a
        flat region product (floored once), so every join order of the same
        region sees the same number."""
        for e in group.expressions:
            if e.op == "join" and e.join_type == "inner":
                return e
        return None

    def _flatten_region(self, e: GroupExpression, leaves: list,
                        conjuncts: list) -> None:
        for gid in e.children:
            child = self.group(gid)
            sub = self._region_expr(child)
            if sub is not None and child.card_override is None:
                self._flatten_region(sub, leaves, conjuncts)
            else:
                leaves.append(gid)
        conjuncts.extend(ir.split_conjuncts(e.condition))

    def _region_estimate(self, e: GroupExpression) -> float:
        leaves: list = []
        conjuncts: list = []
        self._flatten_region(e, leaves, conjuncts)
        leaf_of: dict[int, int] = {}
        for i, gid in enumerate(leaves):
            for cid in self.group(gid).out_ids:
                leaf_of.setdefault(cid, i)
        rows = 1.0
        empty = False
        for gid in leaves:
            r = self.rows(gid)
            if r <= 0:
                empty = True
            rows *= r
        equi_factor = 1.0
        residual = []
        for c in conjuncts:
            if c.expr == "call" and c.fn == "eq":
                a, b = c.args
                if a.expr == "col" and b.expr == "col" \
                        and leaf_of.get(a.ordinal) != leaf_of.get(b.ordinal):
                    sa = self.stats_for_id(a.ordinal)
                    sb = self.stats_for_id(b.ordinal)
                    ndv = max((s.ndv for s in (sa, sb) if s is not None),
                              default=None)
                    equi_factor *= (1.0 / ndv) if ndv else cardinality.DEFAULT_SEL
                    continue
            residual.append(c)
        residual_sel = 1.0
        if residual:
            residual_sel = cardinality.clamp_selectivity(
                cardinality._sel(ir.make_conjunction(residual),
                                 self.stats_for_id))
        if empty:
            return 0.0
        return cardinality.floor_rows(rows * equi_factor * residual_sel)

    def _estimate(self, e: GroupExpression) -> float:
        kid_rows = [self.rows(c) for c in e.children]
        if e.op == "read":
            if e.table == ir.EMPTY_TABLE:
                return 0.0
            if e.table == ir.BRIDGE_TABLE:
                return 1.0
            return cardinality.floor_rows(
                float(self.catalog.table(e.table).row_count), allow_zero=True)
        if e.op == "filter":
            sel = cardinality.selectivity(e.predicate, self.stats_for_id)
            return cardinality.floor_rows(kid_rows[0] * sel)
        if e.op in ("project", "sort"):
            return kid_rows[0]
        if e.op == "limit":
            return min(kid_rows[0], float(e.count))
        if e.op == "union_all":
            return kid_rows[0] + kid_rows[1]
        if e.op == "aggregate":
            ndvs = []
            for k in e.group_keys:
                st = self.stats_for_id(k)
                ndvs.append(st.ndv if st is not None else None)
            return cardinality.floor_rows(
                cardinality.aggregate_rows(kid_rows[0], ndvs))
        if e.op == "join":
            equi, residual = self.classify_condition(e)
            equi_ndvs = []
            for la, rb in equi:
                sa, sb = self.stats_for_id(la), self.stats_for_id(rb)
                equi_ndvs.append((sa.ndv if sa else None, sb.ndv if sb else None))
            residual_sel = 1.0
            if residual:
                residual_sel = cardinality.clamp_selectivity(
                    cardinality._sel(ir.make_conjunction(residual),
                                     self.stats_for_id))
            return cardinality.floor_rows(cardinality.join_rows(
                e.join_type, kid_rows[0], kid_rows[1], equi_ndvs, residual_sel))
        raise MemoInternalError(f"unknown op {e.op}")

    def classify_condition(self, e: GroupExpression):
        """Cross-side equi id pairs and residual conjuncts of a join."""
        left_ids = set(self.group(e.children[0]).out_ids)
        right_ids = set(self.group(e.children[1]).out_ids)
        equi, residual = [], []
        for c in ir.split_conjuncts(e.condition):
            if c.expr == "call" and c.fn == "eq":
                a, b = c.args
                if a.expr == "col" and b.expr == "col":
                    if a.ordinal in left_ids and b.ordinal in right_ids:
                        equi.append((a.ordinal, b.ordinal))
                        continue
                    if b.ordinal in left_ids and a.ordinal in right_ids:
                        equi.append((b.ordinal, a.ordinal))
                        continue
            residual.append(c)
        return equi, residual


def _to_ids(expr: ir.Expression, ids: tuple) -> ir.Expression:
    """Positional expression -> id-space expression."""
    return ir.remap_expr(expr, {o: ids[o] for o in ir.references(expr)})


def to_positions(expr: ir.Expression, id_order: tuple) -> ir.Expression:
    """Id-space expression -> positional, given the child output order."""
    pos = {}
    for i, cid in enumerate(id_order):
        pos.setdefault(cid, i)
    return ir.remap_expr(expr, {i: pos[i] for i in ir.references(expr)})


def materialize(expr: GroupExpression, kid_nodes: list, kid_ids: list):
    """Concrete PlanNode (no annotation) for one expression given already
    materialized children; returns (node, out id order)."""
    if expr.op == "read":
        return ir.read(expr.table, inline_schema=expr.inline_schema), expr.out_ids
    if expr.op == "filter":
        return (ir.filter_(to_positions(expr.predicate, kid_ids[0]),
                           kid_nodes[0]), tuple(kid_ids[0]))
    if expr.op == "project":
        return (ir.project([to_positions(e, kid_ids[0]) for e in expr.exprs],
                           kid_nodes[0]), expr.out_ids)
    if expr.op == "join":
        joined = tuple(kid_ids[0]) + tuple(kid_ids[1])
        cond = to_positions(expr.condition, joined) \
            if expr.condition is not None else None
        out = tuple(kid_ids[0]) if expr.join_type in ("left_semi", "left_anti") \
            else joined
        return (ir.join(expr.join_type, cond, kid_nodes[0], kid_nodes[1]), out)
    if expr.op == "aggregate":
        pos = {cid: i for i, cid in enumerate(kid_ids[0])}
        keys = [pos[k] for k in expr.group_keys]
        measures = [to_positions(m, kid_ids[0]) for m in expr.measures]
        return (ir.aggregate(keys, measures, kid_nodes[0]), expr.out_ids)
    if expr.op == "sort":
        pos = {cid: i for i, cid in enumerate(kid_ids[0])}
        keys = [ir.SortKey(pos[i], d) for (i, d) in expr.sort_keys]
        return (ir.sort(keys, kid_nodes[0]), tuple(kid_ids[0]))
    if expr.op == "union_all":
        return (ir.union_all(kid_nodes[0], kid_nodes[1]), expr.out_ids)
    if expr.op == "limit":
        return (ir.limit(expr.count, kid_nodes[0]), tuple(kid_ids[0]))
    raise MemoInternalError(f"unknown op {expr.op}")
