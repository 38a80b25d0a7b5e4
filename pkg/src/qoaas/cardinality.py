"""Row-count estimation with digest-keyed true-cardinality overrides.

Formulas are the textbook independence/containment rules; the contract
(not the formula) is the commitment, so a learned estimator could slot in
behind the same interface. When a node's logical fragment digest appears
in the overrides map, the observed actual wins over any formula.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Optional

from . import ir
from .catalog import ColumnStats
from .errors import QoaasError

SEL_FLOOR = 1e-6
DEFAULT_RANGE_SEL = 1.0 / 3.0
DEFAULT_SEL = 0.1


class NotBoolean(QoaasError):
    pass


def clamp_selectivity(value: float) -> float:
    return min(1.0, max(SEL_FLOOR, value))


@dataclass
class CardinalityOverrides:
    """Fragment digest -> observed actual row count."""

    by_digest: dict = field(default_factory=dict)

    def put(self, digest: str, rows: float) -> None:
        if rows < 0:
            raise ValueError("override counts must be non-negative")
        self.by_digest[digest] = float(rows)

    def get(self, digest: str) -> Optional[float]:
        return self.by_digest.get(digest)

    def merge(self, other: dict) -> "CardinalityOverrides":
        merged = dict(self.by_digest)
        for k, v in other.items():
            if v < 0:
                raise ValueError("override counts must be non-negative")
            merged[k] = float(v)
        return CardinalityOverrides(merged)

    def to_json(self) -> dict:
        return dict(self.by_digest)

    @staticmethod
    def from_json(obj: dict) -> "CardinalityOverrides":
        out = CardinalityOverrides()
        for k, v in (obj or {}).items():
            out.put(k, v)
        return out


StatsLookup = Callable[[int], Optional[ColumnStats]]


def _as_float(v) -> Optional[float]:
    if isinstance(v, bool) or v is None:
        return None
    if isinstance(v, (int, float, Decimal, numbers.Real)):
        return float(v)
    return None


def _range_fraction(stats: Optional[ColumnStats], op: str, literal) -> float:
    """Fraction of [min, max] selected by a comparison against a literal."""
    if stats is None or stats.min is None or stats.max is None:
        return DEFAULT_RANGE_SEL
    lo, hi, v = _as_float(stats.min), _as_float(stats.max), _as_float(literal)
    if lo is None or hi is None or v is None or hi <= lo:
        return DEFAULT_RANGE_SEL
    frac = (v - lo) / (hi - lo)
    frac = min(1.0, max(0.0, frac))
    if op in ("gt", "ge"):
        frac = 1.0 - frac
    return frac


def selectivity(predicate: ir.Expression, stats_lookup: StatsLookup,
                input_schema: Optional[tuple] = None) -> float:
    """Estimated fraction of rows satisfying the predicate.

    ``stats_lookup`` resolves a column reference (by its ordinal) to stats,
    or None when unknown. When ``input_schema`` is given the predicate must
    type-check to bool.
    """
    if input_schema is not None:
        t = ir.expr_type(predicate, input_schema)
        if t.kind != "bool":
            raise NotBoolean(f"predicate has type {t.kind}")
    return clamp_selectivity(_sel(predicate, stats_lookup))


def _col_and_lit(a: ir.Expression, b: ir.Expression):
    if a.expr == "col" and b.expr == "lit":
        return a, b
    if b.expr == "col" and a.expr == "lit":
        return b, a
    return None, None


def _sel(pred: ir.Expression, stats: StatsLookup) -> float:
    if pred.expr == "lit":
        if pred.value is True:
            return 1.0
        if pred.value is False or pred.value is None:
            return 0.0
        return DEFAULT_SEL
    if pred.expr != "call":
        return DEFAULT_SEL
    fn = pred.fn
    if fn == "and":
        return _sel(pred.args[0], stats) * _sel(pred.args[1], stats)
    if fn == "or":
        s1, s2 = _sel(pred.args[0], stats), _sel(pred.args[1], stats)
        return s1 + s2 - s1 * s2
    if fn == "not":
        return 1.0 - _sel(pred.args[0], stats)
    if fn in ("eq", "ne"):
        c, l = _col_and_lit(pred.args[0], pred.args[1])
        if c is not None:
            st = stats(c.ordinal)
            ndv = st.ndv if st is not None else None
            eq_sel = (1.0 / ndv) if ndv else DEFAULT_SEL
            return eq_sel if fn == "eq" else 1.0 - eq_sel
        a, b = pred.args
        if a.expr == "col" and b.expr == "col":
            sa, sb = stats(a.ordinal), stats(b.ordinal)
            ndv = max((s.ndv for s in (sa, sb) if s is not None), default=None)
            if ndv:
                eq_sel = 1.0 / ndv
                return eq_sel if fn == "eq" else 1.0 - eq_sel
        return DEFAULT_SEL
    if fn in ("lt", "le", "gt", "ge"):
        c, l = _col_and_lit(pred.args[0], pred.args[1])
        if c is not None:
            op = fn
            if pred.args[0].expr == "lit":
                # literal on the left: flip the comparison
                op = {"lt": "gt", "le": "ge", "gt": "lt", "ge": "le"}[fn]
            return _range_fraction(stats(c.ordinal), op, l.value)
        return DEFAULT_RANGE_SEL
    return DEFAULT_SEL


# ---------------------------------------------------------------------------
# semantic row-count rules, shared by the tree estimator and the search


def classify_join_condition(condition: Optional[ir.Expression],
                            left_width: int):
    """Split a join condition into cross-side equi pairs and residual
    conjuncts. Returns (equi_pairs [(left_ord, right_ord_rel)], residuals),
    with right ordinals relative to the right child."""
    equi = []
    residual = []
    for c in ir.split_conjuncts(condition):
        if c.expr == "call" and c.fn == "eq" and len(c.args) == 2:
            a, b = c.args
            if a.expr == "col" and b.expr == "col":
                sides = {a.ordinal < left_width, b.ordinal < left_width}
                if sides == {True, False}:
                    l, r = (a, b) if a.ordinal < left_width else (b, a)
                    equi.append((l.ordinal, r.ordinal - left_width))
                    continue
        residual.append(c)
    return equi, residual


def inner_join_rows(left_rows: float, right_rows: float,
                    equi_ndvs: list, residual_sel: float) -> float:
    """|L|*|R| shrunk by 1/max(ndv) per equi pair and the residual
    selectivity. equi_ndvs holds (ndv_left | None, ndv_right | None)."""
    rows = left_rows * right_rows
    for ndv_l, ndv_r in equi_ndvs:
        ndv = max(filter(None, (ndv_l, ndv_r)), default=None)
        rows *= (1.0 / ndv) if ndv else DEFAULT_SEL
    return rows * residual_sel


def join_rows(join_type: str, left_rows: float, right_rows: float,
              equi_ndvs: list, residual_sel: float) -> float:
    inner = inner_join_rows(left_rows, right_rows, equi_ndvs, residual_sel)
    if join_type == "inner":
        return inner
    if join_type == "left":
        return max(inner, left_rows)
    if join_type == "right":
        return max(inner, right_rows)
    if join_type == "full":
        return max(inner, left_rows, right_rows)
    if join_type == "left_semi":
        return min(left_rows, inner)
    if join_type == "left_anti":
        return left_rows - min(left_rows, inner)
    raise ValueError(join_type)


def aggregate_rows(child_rows: float, key_ndvs: list) -> float:
    if not key_ndvs:
        return 1.0
    combos = 1.0
    for ndv in key_ndvs:
        combos *= ndv if ndv else 10.0
    return min(combos, child_rows)


def floor_rows(rows: float, allow_zero: bool = False) -> float:
    if allow_zero and rows <= 0:
        return 0.0
    return max(1.0, rows)


def is_identity_project(node: ir.PlanNode, width: int) -> bool:
    return node.op == "project" and len(node.exprs) == width and all(
        e.expr == "col" and e.ordinal == i for i, e in enumerate(node.exprs))


# ---------------------------------------------------------------------------
# concrete-tree estimation


class TreeEstimator:
    """Bottom-up estimation over a validated logical tree.

    Estimates are cached per node object; fragment digests are computed on
    the schema-resolved tree so overrides key consistently with feedback.
    """

    def __init__(self, catalog, overrides: Optional[CardinalityOverrides] = None):
        self.catalog = catalog
        self.overrides = overrides or CardinalityOverrides()
        self.ctx = ir.SchemaContext(catalog)
        self.rows: dict[int, float] = {}
        self.digests: dict[int, str] = {}

    def _stats_lookup(self, node: ir.PlanNode) -> StatsLookup:
        origins = self.ctx.origins(node)

        def lookup(ordinal: int) -> Optional[ColumnStats]:
            if not (0 <= ordinal < len(origins)) or origins[ordinal] is None:
                return None
            table, column = origins[ordinal]
            return self.catalog.resolve_stats(table, column)
        return lookup

    def digest(self, node: ir.PlanNode) -> str:
        key = id(node)
        if key not in self.digests:
            self.digests[key] = ir.fragment_digest(node, self.catalog)
        return self.digests[key]

    def estimate(self, node: ir.PlanNode) -> float:
        key = id(node)
        if key in self.rows:
            return self.rows[key]
        child_rows = [self.estimate(c) for c in node.children]
        override = self.overrides.get(self.digest(node)) \
            if self.overrides.by_digest else None
        if override is not None:
            rows = override
        elif self._is_region_root(node):
            rows = self._region_estimate(node)
        else:
            rows = self._formula(node, child_rows)
        self.rows[key] = rows
        return rows

    # -- inner-join regions: estimated as one flat product over the region
    #    leaves, floored once, so the estimate is identical for every join
    #    order of the same region (and for the filter-merged form)

    def _width(self, node: ir.PlanNode) -> int:
        return len(self.ctx.schema(node))

    def _is_region_root(self, node: ir.PlanNode) -> bool:
        if node.op == "join" and node.join_type == "inner":
            return True
        if node.op == "filter":
            return self._is_region_root(node.children[0])
        if node.op == "project" and \
                is_identity_project(node, self._width(node.children[0])):
            return self._is_region_root(node.children[0])
        return False

    def _flatten_region(self, node: ir.PlanNode):
        leaves: list = []
        conjuncts: list = []
        root = node

        def walk(n: ir.PlanNode, base: int) -> int:
            if n is not root and self.overrides.by_digest \
                    and self.overrides.get(self.digest(n)) is not None:
                # observed actuals cap the region here
                leaves.append(n)
                return self._width(n)
            if n.op == "join" and n.join_type == "inner":
                lw = walk(n.children[0], base)
                rw = walk(n.children[1], base + lw)
                for c in ir.split_conjuncts(n.condition):
                    conjuncts.append(ir.remap_expr(
                        c, {o: base + o for o in ir.references(c)}))
                return lw + rw
            if n.op == "filter" and self._is_region_root(n.children[0]):
                w = walk(n.children[0], base)
                for c in ir.split_conjuncts(n.predicate):
                    conjuncts.append(ir.remap_expr(
                        c, {o: base + o for o in ir.references(c)}))
                return w
            if n.op == "project" \
                    and is_identity_project(n, self._width(n.children[0])) \
                    and self._is_region_root(n.children[0]):
                return walk(n.children[0], base)
            leaves.append(n)
            return self._width(n)

        walk(node, 0)
        return leaves, conjuncts

    def _region_estimate(self, node: ir.PlanNode) -> float:
        leaves, conjuncts = self._flatten_region(node)
        offsets = []
        origins: list = []
        off = 0
        for leaf in leaves:
            offsets.append(off)
            off += self._width(leaf)
            origins.extend(self.ctx.origins(leaf))

        def leaf_of(ordinal: int) -> int:
            for i in reversed(range(len(leaves))):
                if ordinal >= offsets[i]:
                    return i
            raise ValueError(ordinal)

        def lookup(o):
            if not (0 <= o < len(origins)) or origins[o] is None:
                return None
            t, c = origins[o]
            return self.catalog.resolve_stats(t, c)

        rows = 1.0
        empty = False
        for leaf in leaves:
            r = self.estimate(leaf)
            if r <= 0:
                empty = True
            rows *= r
        equi_factor = 1.0
        residual = []
        for c in conjuncts:
            if c.expr == "call" and c.fn == "eq":
                a, b = c.args
                if a.expr == "col" and b.expr == "col" \
                        and leaf_of(a.ordinal) != leaf_of(b.ordinal):
                    sa, sb = lookup(a.ordinal), lookup(b.ordinal)
                    ndv = max((s.ndv for s in (sa, sb) if s is not None),
                              default=None)
                    equi_factor *= (1.0 / ndv) if ndv else DEFAULT_SEL
                    continue
            residual.append(c)
        residual_sel = 1.0
        if residual:
            residual_sel = clamp_selectivity(
                _sel(ir.make_conjunction(residual), lookup))
        if empty:
            return 0.0
        return floor_rows(rows * equi_factor * residual_sel)

    def _formula(self, node: ir.PlanNode, child_rows: list) -> float:
        if node.op == "read":
            if node.table == ir.EMPTY_TABLE:
                return 0.0
            if node.table == ir.BRIDGE_TABLE:
                return 1.0
            return floor_rows(float(self.catalog.table(node.table).row_count),
                              allow_zero=True)
        if node.op == "filter":
            sel = selectivity(node.predicate,
                              self._stats_lookup(node.children[0]))
            return floor_rows(child_rows[0] * sel)
        if node.op in ("project", "sort"):
            return child_rows[0]
        if node.op == "limit":
            return min(child_rows[0], float(node.count))
        if node.op == "union_all":
            return child_rows[0] + child_rows[1]
        if node.op == "aggregate":
            lookup = self._stats_lookup(node.children[0])
            ndvs = []
            for k in node.group_keys:
                st = lookup(k)
                ndvs.append(st.ndv if st is not None else None)
            return floor_rows(aggregate_rows(child_rows[0], ndvs))
        if node.op == "join":
            left, right = node.children
            lw = len(self.ctx.schema(left))
            equi, residual = classify_join_condition(node.condition, lw)
            llook = self._stats_lookup(left)
            rlook = self._stats_lookup(right)
            equi_ndvs = []
            for lo, ro in equi:
                sl, sr = llook(lo), rlook(ro)
                equi_ndvs.append((sl.ndv if sl else None, sr.ndv if sr else None))
            residual_sel = 1.0
            if residual:
                joined = self.ctx.schema(left) + self.ctx.schema(right)
                lorig = self.ctx.origins(left) + self.ctx.origins(right)

                def lookup(o):
                    if not (0 <= o < len(lorig)) or lorig[o] is None:
                        return None
                    t, c = lorig[o]
                    return self.catalog.resolve_stats(t, c)
                residual_sel = clamp_selectivity(
                    _sel(ir.make_conjunction(residual), lookup))
            rows = join_rows(node.join_type, child_rows[0], child_rows[1],
                             equi_ndvs, residual_sel)
            return floor_rows(rows)
        raise ValueError(f"unknown op {node.op}")


def estimate_rows(node: ir.PlanNode, catalog,
                  overrides: Optional[CardinalityOverrides] = None) -> float:
    """Estimated output rows of one node (children estimated internally)."""
    return TreeEstimator(catalog, overrides).estimate(node)


def estimate_tree(root: ir.PlanNode, catalog,
                  overrides: Optional[CardinalityOverrides] = None) -> dict:
    """id(node) -> estimated rows for every node under root."""
    est = TreeEstimator(catalog, overrides)
    out: dict[int, float] = {}

    def walk(node: ir.PlanNode) -> None:
        for c in node.children:
            walk(c)
        out[id(node)] = est.estimate(node)
    walk(root)
    return out
