import pytest

from qoaas import ir, postopt
from qoaas.engines import execute, plan_for_engine, reference_eval, rows_multiset
from qoaas.errors import UnannotatedNode
from qoaas.explorer import OptimizeRequest, optimize
from qoaas import params
from qoaas.catalog import Catalog, ColumnStats, TableMeta
import random


def two_join_doc():
    n, r = ir.read("nation"), ir.read("region")
    j1 = ir.join("inner", ir.call("eq", ir.col(2), ir.col(4)), n, r)
    j2 = ir.join("inner", ir.call("eq", ir.col(0), ir.col(6)), j1,
                 ir.read("nation2"))
    return ir.PlanDocument(root=j2, query_id="twoj")


@pytest.fixture
def cat(nation_catalog):
    rows = [(i, i % 3) for i in range(1, 26)]
    nation_catalog.register_table(
        TableMeta("nation2", [("k", ir.i64()), ("g", ir.i64())],
                  row_count=25),
        {"k": ColumnStats(ndv=25, min=1, max=25)}, rows=rows)
    return nation_catalog


def test_v1_strips_annotations_preserves_structure(cat):
    doc = two_join_doc()
    plan = optimize(OptimizeRequest(doc=doc, target_engines=["colstar"]), cat)
    [v1] = postopt.emit(plan, "v1", cat)

    def check(node):
        assert node.annotation is None
        for c in node.children:
            check(c)
    check(v1.root)
    assert ir.validate_plan(v1, cat).ok
    # join order is whatever the optimizer picked; digest changes iff it moved
    joins = []

    def count(node):
        if node.op == "join":
            joins.append(node)
        for c in node.children:
            count(c)
    count(v1.root)
    assert len(joins) == 2


def test_v2_hints_exactly_on_join_nodes(cat):
    doc = two_join_doc()
    plan = optimize(OptimizeRequest(doc=doc, target_engines=["shardrun"]), cat)
    [v2] = postopt.emit(plan, "v2", cat)
    assert (ir.HINT_EXTENSION_URI, "physical-hints") in v2.extensions
    hinted = postopt.hinted_nodes(v2)
    assert len(hinted) == 2
    for _, ann in hinted:
        assert ann.op in ("hash_join", "sort_merge_join")
        assert ann.hint_only
        assert ann.exchange in ("broadcast", "shuffle")
    assert ir.validate_plan(v2, cat).ok


def test_v1_v2_semantics_preserved(cat):
    doc = two_join_doc()
    ref = rows_multiset(reference_eval(doc, cat))
    plan = optimize(OptimizeRequest(doc=doc, target_engines=["colstar"]), cat)
    for mode in ("v1", "v2"):
        [emitted] = postopt.emit(plan, mode, cat)
        phys = plan_for_engine(emitted, "colstar", cat)
        assert rows_multiset(execute(phys, cat).rows) == ref


def test_full_mode_requires_annotations(cat):
    doc = two_join_doc()
    with pytest.raises(UnannotatedNode):
        postopt.emit(doc, "full", cat)


def test_full_mode_single_segment(cat):
    doc = two_join_doc()
    plan = optimize(OptimizeRequest(doc=doc, target_engines=["colstar"]), cat)
    segments = postopt.emit(plan, "full", cat)
    assert len(segments) == 1
    assert segments[0].engine == "colstar"
    assert ir.validate_plan(segments[0], cat).ok


def hybrid_plan():
    rng = random.Random(11)
    cat = Catalog()
    cat.register_default_engines()

    def mk(name, n, keys, pinned=None):
        cols = [(k, ir.i64()) for k in keys]
        rows = [tuple(rng.randrange(1, 30) for _ in keys) for _ in range(n)]
        cat.register_table(
            TableMeta(name, cols, row_count=n, pinned_engine=pinned),
            {k: ColumnStats(ndv=len({r[i] for r in rows}))
             for i, k in enumerate(keys)}, rows=rows)
    mk("big1", 300, ["a", "v"], pinned="colstar")
    mk("big2", 280, ["a", "w"], pinned="colstar")
    j = ir.join("inner", ir.call("eq", ir.col(0), ir.col(2)),
                ir.read("big1"), ir.read("big2"))
    agg = ir.aggregate([0], [ir.call("count_star")], j)
    doc = ir.PlanDocument(root=agg, query_id="hseg")
    colstar_params = params.defaults().replace(
        cpu_hash_build=150.0, cpu_hash_probe=80.0, cpu_compare=70.0,
        cpu_pred=50.0)
    plan = optimize(OptimizeRequest(
        doc=doc, target_engines=["colstar", "shardrun"],
        params={"colstar": colstar_params, "shardrun": params.defaults()}),
        cat)
    return cat, doc, plan


def test_full_mode_hybrid_segments_and_reassembly():
    cat, doc, plan = hybrid_plan()
    segments = postopt.emit(plan, "full", cat)
    assert len(segments) >= 2
    engines = {s.engine for s in segments}
    assert engines == {"colstar", "shardrun"}
    producers = [s for s in segments if s.out_bridge]
    assert producers, "hybrid emission must wire at least one bridge"
    for s in segments:
        assert s.segment_of == "hseg"
        assert ir.validate_plan(s, cat).ok
        # cut segments carry no bridge operators themselves
        def no_bridge(node):
            if node.annotation is not None:
                assert node.annotation.op != "engine_bridge"
            for c in node.children:
                no_bridge(c)
        no_bridge(s.root)
    bridge_ids = {s.out_bridge for s in producers}
    consumed = set()

    def reads(node):
        if node.op == "read" and node.table == ir.BRIDGE_TABLE:
            consumed.add(node.bridge_id)
        for c in node.children:
            reads(c)
    for s in segments:
        reads(s.root)
    assert consumed == bridge_ids
    ref = rows_multiset(reference_eval(doc, cat))
    assert rows_multiset(execute(segments, cat).rows) == ref


def test_bad_mode_rejected(cat):
    with pytest.raises(ValueError):
        postopt.emit(two_join_doc(), "v3", cat)
