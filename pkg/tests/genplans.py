"""Seeded random catalogs, plans, and join graphs for property tests.

Plans come out valid by construction over the generated catalog; the join
graph builder pairs with the exhaustive oracle in oracle.py.
"""

from __future__ import annotations

import random

from qoaas import ir
from qoaas.catalog import Catalog, ColumnStats, TableMeta


def build_catalog(rng: random.Random, n_tables: int = 4,
                  min_rows: int = 10, max_rows: int = 100) -> Catalog:
    """Tables of i64 key/value columns with loaded data and true stats."""
    cat = Catalog()
    cat.register_default_engines()
    for t in range(n_tables):
        n = rng.randint(min_rows, max_rows)
        ncols = rng.randint(2, 4)
        cols = [(f"c{j}", ir.i64()) for j in range(ncols)]
        # small value domains so joins actually match
        domains = [rng.choice([4, 8, 16, 32]) for _ in range(ncols)]
        rows = [tuple(rng.randint(1, domains[j]) for j in range(ncols))
                for _ in range(n)]
        stats = {}
        for j in range(ncols):
            vals = [r[j] for r in rows]
            stats[f"c{j}"] = ColumnStats(ndv=len(set(vals)), min=min(vals),
                                         max=max(vals))
        cat.register_table(TableMeta(f"t{t}", cols, row_count=n),
                           stats, rows=rows)
    return cat


class PlanGen:
    """Random valid logical plans over a generated catalog."""

    def __init__(self, rng: random.Random, catalog: Catalog,
                 equi_only: bool = False, allow_limit: bool = True):
        self.rng = rng
        self.cat = catalog
        self.tables = catalog.tables()
        self.equi_only = equi_only
        self.allow_limit = allow_limit

    def document(self, query_id: str = "q") -> ir.PlanDocument:
        node = self.plan()
        doc = ir.PlanDocument(root=node, query_id=query_id)
        report = ir.validate_plan(doc, self.cat)
        assert report.ok, [f"{e.path}: {e.message}" for e in report.errors]
        return doc

    def plan(self) -> ir.PlanNode:
        node = self.source(depth=self.rng.randint(1, 3))
        # wrap with a top-level shape now and then
        roll = self.rng.random()
        schema = self._schema(node)
        if roll < 0.35:
            node = self._aggregate(node)
        elif roll < 0.5:
            node = self._project(node)
        if self.allow_limit and self.rng.random() < 0.15:
            keys = [ir.SortKey(i) for i in range(len(self._schema(node)))]
            node = ir.limit(self.rng.randint(1, 8), ir.sort(keys, node))
        elif self.rng.random() < 0.2:
            schema = self._schema(node)
            k = self.rng.randrange(len(schema))
            node = ir.sort([ir.SortKey(k, self.rng.choice(["asc", "desc"]))],
                           node)
        return node

    def source(self, depth: int) -> ir.PlanNode:
        r = self.rng.random()
        if depth <= 0 or r < 0.3:
            node = ir.read(self.rng.choice(self.tables))
            if self.rng.random() < 0.5:
                node = self._filter(node)
            return node
        if r < 0.75:
            return self._join(depth)
        if r < 0.85:
            base = self.source(depth - 1)
            return ir.union_all(self._filter(base), self._filter(base))
        node = self.source(depth - 1)
        if self.rng.random() < 0.6:
            node = self._filter(node)
        if self.rng.random() < 0.4:
            node = self._project(node)
        return node

    def _schema(self, node: ir.PlanNode):
        return ir.SchemaContext(self.cat).schema(node)

    def _aggregate(self, node: ir.PlanNode) -> ir.PlanNode:
        schema = self._schema(node)
        width = len(schema)
        n_keys = self.rng.randint(0, min(2, width))
        keys = sorted(self.rng.sample(range(width), n_keys))
        measures = [ir.call("count_star")]
        numeric = [i for i, t in enumerate(schema) if t.kind == "i64"]
        if numeric and self.rng.random() < 0.7:
            fn = self.rng.choice(["sum", "min", "max", "count"])
            measures.append(ir.call(fn, ir.col(self.rng.choice(numeric))))
        return ir.aggregate(keys, measures, node)

    def _filter(self, node: ir.PlanNode) -> ir.PlanNode:
        return ir.filter_(self._predicate(self._schema(node)), node)

    def _predicate(self, schema) -> ir.Expression:
        def atom():
            k = self.rng.randrange(len(schema))
            fn = self.rng.choice(["eq", "ne", "lt", "le", "gt", "ge"])
            return ir.call(fn, ir.col(k), ir.lit(ir.i64(),
                                                 self.rng.randint(0, 20)))
        pred = atom()
        for _ in range(self.rng.randint(0, 2)):
            fn = self.rng.choice(["and", "or"])
            pred = ir.call(fn, pred, atom())
        if self.rng.random() < 0.15:
            pred = ir.call("not", pred)
        return pred

    def _project(self, node: ir.PlanNode) -> ir.PlanNode:
        schema = self._schema(node)
        width = len(schema)
        n = self.rng.randint(1, width)
        exprs = []
        for _ in range(n):
            k = self.rng.randrange(width)
            if self.rng.random() < 0.25 and not schema[k].nullable:
                exprs.append(ir.call("add", ir.col(k),
                                     ir.lit(ir.i64(), self.rng.randint(1, 5))))
            else:
                exprs.append(ir.col(k))
        return ir.project(exprs, node)

    def _join(self, depth: int) -> ir.PlanNode:
        left = self.source(depth - 1)
        right = self.source(depth - 1)
        ls, rs = self._schema(left), self._schema(right)
        jt = self.rng.choice(["inner"] * 5 + ["left", "right", "left_semi",
                                              "left_anti"])
        if self.equi_only:
            jt = "inner"
        lk = self.rng.randrange(len(ls))
        rk = self.rng.randrange(len(rs))
        cond = ir.call("eq", ir.col(lk), ir.col(len(ls) + rk))
        if not self.equi_only and self.rng.random() < 0.25:
            extra = ir.call("le", ir.col(self.rng.randrange(len(ls))),
                            ir.lit(ir.i64(), self.rng.randint(2, 24)))
            cond = ir.call("and", cond, extra)
        return ir.join(jt, cond, left, right)


def join_graph_case(seed: int, n_rel: int):
    """(catalog, relations, edges, doc) for exhaustive-oracle comparisons.

    Each relation has three i64 key columns with ndv <= rows; the graph is
    a random spanning tree plus extra edges; the document is a left-deep
    inner-join chain with every edge's condition attached at the lowest
    join that can evaluate it, under a full-width root projection."""
    rng = random.Random(seed)
    cat = Catalog()
    cat.register_default_engines()
    rels = []
    for i in range(n_rel):
        rows = rng.choice([10, 50, 100, 500, 1000, 5000])
        cols = [(f"k{j}", ir.i64()) for j in range(3)]
        stats = {f"k{j}": ColumnStats(
            ndv=min(rows, rng.choice([2, 5, 10, 50, 100, max(1, rows // 10)])))
            for j in range(3)}
        cat.register_table(TableMeta(f"t{i}", cols, row_count=rows), stats)
        rels.append((f"t{i}", rows))
    edges = []
    for i in range(1, n_rel):
        j = rng.randrange(i)
        edges.append((j, i, rng.randrange(3), rng.randrange(3)))
    for _ in range(rng.randrange(0, n_rel - 1)):
        a, b = rng.sample(range(n_rel), 2)
        if a > b:
            a, b = b, a
        edges.append((a, b, rng.randrange(3), rng.randrange(3)))

    node = ir.read(rels[0][0])
    for i in range(1, n_rel):
        conj = [ir.call("eq", ir.col(3 * a + ca), ir.col(3 * i + cb))
                for (a, b, ca, cb) in edges if b == i and a < i]
        node = ir.join("inner", ir.make_conjunction(conj), node,
                       ir.read(rels[i][0]))
    ncols = 3 * n_rel
    root = ir.project([ir.col(k) for k in range(ncols)], node)
    return cat, rels, edges, ir.PlanDocument(root=root, query_id=f"g{seed}")
