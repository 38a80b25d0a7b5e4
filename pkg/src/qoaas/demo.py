"""Seeded desk-scale scenario: tables, data files, catalog bootstrap, and
two workloads (join-heavy and scan/aggregate-heavy).

The same generator backs the tuning experiments in the test suite and the
CLI walkthrough, so numbers stay reproducible from a seed.
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

from . import ir
from .catalog import load_catalog
from .engines.weights import packaged_true_weights

TABLES = (
    # name, rows, key spec: (column, ndv); payload columns get values/text
    ("supplier", 40, (("s_key", 40), ("s_region", 5))),
    ("part", 120, (("p_key", 120), ("p_kind", 12))),
    ("customer", 80, (("c_key", 80), ("c_region", 5))),
    ("orders", 300, (("o_key", 300), ("o_cust", 80), ("o_status", 4))),
    ("lineitem", 420, (("l_order", 300), ("l_part", 120), ("l_supp", 40),
                       ("l_qty", 25))),
    ("events", 260, (("e_cust", 80), ("e_kind", 8), ("e_val", 90))),
)


def _gen_table(rng: random.Random, rows: int, columns) -> list:
    out = []
    for i in range(rows):
        row = []
        for (name, ndv) in columns:
            if name.endswith("_key"):
                row.append(i + 1)                     # unique key
            else:
                row.append(rng.randrange(1, ndv + 1))
        out.append(tuple(row))
    return out


def build_demo_workspace(out_dir, seed: int = 7) -> Path:
    """Write CSVs, catalog.json, true-weights.json, and workload plan
    files under ``out_dir``; returns the catalog path."""
    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)

    tables_json = []
    for (name, rows, columns) in TABLES:
        data = _gen_table(rng, rows, columns)
        path = out / "data" / f"{name}.csv"
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow([c for (c, _) in columns])
            w.writerows(data)
        stats = {}
        for idx, (cname, _) in enumerate(columns):
            values = [r[idx] for r in data]
            stats[cname] = {"ndv": len(set(values)),
                            "min": min(values), "max": max(values),
                            "null_fraction": 0.0}
        tables_json.append({
            "name": name,
            "columns": [{"name": c, "type": {"kind": "i64", "nullable": False}}
                        for (c, _) in columns],
            "row_count": rows,
            "data_path": f"data/{name}.csv",
            "stats": stats,
        })

    catalog_path = out / "catalog.json"
    with catalog_path.open("w", encoding="utf-8") as f:
        json.dump({"tables": tables_json}, f, indent=2)
    with (out / "true-weights.json").open("w", encoding="utf-8") as f:
        json.dump(packaged_true_weights(), f, indent=2)

    join_dir = out / "workload-joins"
    scan_dir = out / "workload-scans"
    join_dir.mkdir(exist_ok=True)
    scan_dir.mkdir(exist_ok=True)
    for i, doc in enumerate(join_workload()):
        (join_dir / f"q{i:02d}.plan.json").write_bytes(ir.encode_canonical(doc))
    for i, doc in enumerate(scan_workload()):
        (scan_dir / f"q{i:02d}.plan.json").write_bytes(ir.encode_canonical(doc))
    return catalog_path


def load_demo_catalog(out_dir):
    return load_catalog(Path(out_dir) / "catalog.json",
                        true_weights=packaged_true_weights())


def _eq(a: int, b: int) -> ir.Expression:
    return ir.call("eq", ir.col(a), ir.col(b))


def _lit(v: int) -> ir.Expression:
    return ir.lit(ir.i64(), v)


def join_workload() -> list:
    """Join-heavy queries: chains and stars over the demo schema, each with
    a grouped aggregate and an explicit output projection."""
    docs = []

    def doc(qid, root):
        docs.append(ir.PlanDocument(root=root, query_id=qid))

    li = ir.read("lineitem")     # l_order l_part l_supp l_qty
    orders = ir.read("orders")   # o_key o_cust o_status
    part = ir.read("part")       # p_key p_kind
    supp = ir.read("supplier")   # s_key s_region
    cust = ir.read("customer")   # c_key c_region

    # q0: lineitem-orders-customer chain, group by customer region
    j = ir.join("inner", _eq(0, 4), li, orders)          # l_order = o_key
    j = ir.join("inner", _eq(5, 7), j, cust)             # o_cust = c_key
    agg = ir.aggregate([8], [ir.call("sum", ir.col(3)),
                             ir.call("count_star")], j)
    doc("jw-chain3", ir.project([ir.col(0), ir.col(1), ir.col(2)], agg))

    # q1: star over lineitem with part and supplier
    j = ir.join("inner", _eq(1, 4), li, part)            # l_part = p_key
    j = ir.join("inner", _eq(2, 6), j, supp)             # l_supp = s_key
    agg = ir.aggregate([5, 7], [ir.call("sum", ir.col(3))], j)
    doc("jw-star3", ir.project([ir.col(0), ir.col(1), ir.col(2)], agg))

    # q2: four-way chain lineitem-orders-customer filtered by status
    j = ir.join("inner", _eq(0, 4), li, orders)
    j = ir.filter_(_eq2("eq", 6, 2), j)                  # o_status = 2
    j = ir.join("inner", _eq(5, 7), j, cust)
    agg = ir.aggregate([8], [ir.call("count_star")], j)
    doc("jw-chain-filter", ir.project([ir.col(0), ir.col(1)], agg))

    # q3: part-lineitem-supplier with selective part filter
    j = ir.join("inner", _eq(0, 3), part, li)            # p_key = l_part
    j = ir.filter_(_eq2("le", 1, 4), j)                  # p_kind <= 4
    j = ir.join("inner", _eq(4, 6), j, supp)             # l_supp = s_key
    agg = ir.aggregate([7], [ir.call("sum", ir.col(5)),
                             ir.call("count_star")], j)
    doc("jw-part-filter", ir.project([ir.col(0), ir.col(1), ir.col(2)], agg))

    # q4: orders-customer with region rollup
    j = ir.join("inner", _eq(1, 3), orders, cust)        # o_cust = c_key
    agg = ir.aggregate([4], [ir.call("count_star")], j)
    doc("jw-two-way", ir.project([ir.col(0), ir.col(1)], agg))

    # q5: five-way join
    j = ir.join("inner", _eq(0, 4), li, orders)          # l_order = o_key
    j = ir.join("inner", _eq(5, 7), j, cust)             # o_cust = c_key
    j = ir.join("inner", _eq(1, 9), j, part)             # l_part = p_key
    j = ir.join("inner", _eq(2, 11), j, supp)            # l_supp = s_key
    agg = ir.aggregate([8, 12], [ir.call("sum", ir.col(3))], j)
    doc("jw-five-way", ir.project([ir.col(0), ir.col(1), ir.col(2)], agg))

    # parameterized variants of q0/q1 (same template, different literals)
    for status in (1, 3):
        j = ir.join("inner", _eq(0, 4), li, orders)
        j = ir.filter_(_eq2("eq", 6, status), j)
        j = ir.join("inner", _eq(5, 7), j, cust)
        agg = ir.aggregate([8], [ir.call("count_star")], j)
        doc(f"jw-chain-filter-{status}",
            ir.project([ir.col(0), ir.col(1)], agg))
    for kind in (6, 9):
        j = ir.join("inner", _eq(0, 3), part, li)
        j = ir.filter_(_eq2("le", 1, kind), j)
        j = ir.join("inner", _eq(4, 6), j, supp)
        agg = ir.aggregate([7], [ir.call("sum", ir.col(5)),
                                 ir.call("count_star")], j)
        doc(f"jw-part-filter-{kind}",
            ir.project([ir.col(0), ir.col(1), ir.col(2)], agg))

    # q10: events joined to customers
    ev = ir.read("events")
    j = ir.join("inner", _eq(0, 3), ev, cust)            # e_cust = c_key
    agg = ir.aggregate([4], [ir.call("sum", ir.col(2)),
                             ir.call("count_star")], j)
    doc("jw-events", ir.project([ir.col(0), ir.col(1), ir.col(2)], agg))

    # q11: lineitem-part two way with quantity filter
    j = ir.join("inner", _eq(1, 4), li, part)
    j = ir.filter_(_eq2("ge", 3, 20), j)
    agg = ir.aggregate([5], [ir.call("count_star")], j)
    doc("jw-li-part", ir.project([ir.col(0), ir.col(1)], agg))
    return docs


def _eq2(fn: str, ordinal: int, value: int) -> ir.Expression:
    return ir.call(fn, ir.col(ordinal), _lit(value))


def scan_workload() -> list:
    """Scan/sort-heavy queries with little join work: the cross-workload
    probe for parameter transferability."""
    docs = []

    def doc(qid, root):
        docs.append(ir.PlanDocument(root=root, query_id=qid))

    li = ir.read("lineitem")
    ev = ir.read("events")
    orders = ir.read("orders")

    f = ir.filter_(_eq2("le", 3, 5), li)                 # very selective
    doc("sw-li-filter", ir.project([ir.col(0), ir.col(3)], f))

    s = ir.sort([ir.SortKey(2, "desc"), ir.SortKey(0)], ev)
    doc("sw-ev-sort", s)

    f = ir.filter_(_eq2("eq", 1, 3), ev)                 # e_kind = 3
    agg = ir.aggregate([0], [ir.call("count_star")],
                       f)
    doc("sw-ev-agg", agg)

    f = ir.filter_(_eq2("eq", 2, 1), orders)             # o_status = 1
    s = ir.sort([ir.SortKey(0)], f)
    doc("sw-orders-sorted", s)

    doc("sw-orders-proj", ir.project(
        [ir.col(0), ir.call("add", ir.col(2), _lit(100))], orders))

    f = ir.filter_(_eq2("ge", 3, 24), li)
    doc("sw-li-top", ir.limit(5, ir.sort([ir.SortKey(0), ir.SortKey(1),
                                          ir.SortKey(2), ir.SortKey(3)], f)))

    f = ir.filter_(_eq2("le", 2, 2), ev)                 # selective
    agg = ir.aggregate([1], [ir.call("sum", ir.col(2))], f)
    doc("sw-ev-val", agg)

    doc("sw-li-proj", ir.project([ir.col(1), ir.col(2)], li))
    return docs
