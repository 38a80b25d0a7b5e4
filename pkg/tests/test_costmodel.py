import pytest

from qoaas import cardinality, costmodel, ir, params


def ann(op, **kw):
    return ir.PhysicalAnnotation(op=op, engine="colstar", **kw)


def ps(**kw):
    return params.from_partial(kw, zero_others=True)


def test_param_registry_has_exactly_sixty():
    assert params.PARAM_COUNT == 60
    assert len(params.PARAM_REGISTRY) == 60
    assert len(set(params.PARAM_NAMES)) == 60


def test_bounds_and_unknown_param():
    with pytest.raises(Exception):
        params.defaults().replace(cpu_tuple=-1)
    with pytest.raises(Exception):
        params.defaults().get("no_such_weight")


def test_table_scan_formula():
    cost = costmodel.cost_operator(ann("table_scan"), (), 1000, 40,
                                   ps(cpu_tuple=1.0, io_seq_page=4.0))
    assert cost == pytest.approx(1020.0)   # 1000 + ceil(40000/8192)=5 pages * 4


def test_hash_join_formula():
    cost = costmodel.cost_operator(
        ann("hash_join", build_side="left"), (100, 1000), 1000, 40,
        ps(cpu_hash_build=2, cpu_hash_probe=1, cpu_tuple=1))
    assert cost == pytest.approx(2200.0)


def test_hash_join_build_side_matters():
    p = ps(cpu_hash_build=2, cpu_hash_probe=1, cpu_tuple=1)
    left = costmodel.cost_operator(ann("hash_join", build_side="left"),
                                   (100, 1000), 1000, 40, p)
    right = costmodel.cost_operator(ann("hash_join", build_side="right"),
                                    (100, 1000), 1000, 40, p)
    assert left != right
    assert right == pytest.approx(2000 + 100 + 1000)


def test_broadcast_formula():
    cost = costmodel.cost_operator(ann("broadcast_exchange"), (100,), 100, 40,
                                   ps(net_byte=0.01), partition_count=4)
    assert cost == pytest.approx(160.0)


def test_partitioned_cpu_division():
    p = ps(cpu_pred=1.0)
    one = costmodel.cost_operator(ann("filter_exec"), (100,), 50, 8, p,
                                  partition_count=1)
    four = costmodel.cost_operator(ann("filter_exec"), (100,), 50, 8, p,
                                   partition_count=4)
    assert one == pytest.approx(4 * four)


def test_cost_plan_additivity(nation_catalog):
    scan = ir.read("nation").with_annotation(ann("table_scan"))
    filt = ir.filter_(ir.call("le", ir.col(0), ir.lit(ir.i64(), 9)),
                      scan).with_annotation(ann("filter_exec"))
    p = params.defaults()
    ests = cardinality.estimate_tree(filt, nation_catalog)
    costed = costmodel.cost_plan(filt, nation_catalog, ests, p)
    assert costed.cumulative_cost == pytest.approx(
        costed.local_cost + costed.children[0].local_cost)


def test_single_scan_cumulative(nation_catalog):
    scan = ir.read("nation").with_annotation(ann("table_scan"))
    ests = cardinality.estimate_tree(scan, nation_catalog)
    p = ps(cpu_tuple=1.0, io_seq_page=4.0)
    costed = costmodel.cost_plan(scan, nation_catalog, ests, p)
    # 25 rows, width 8+8+8+8=32 -> 1 page
    assert costed.cumulative_cost == pytest.approx(25 + 4)


def test_scan_filter_stack_value(nation_catalog):
    scan = ir.read("nation").with_annotation(ann("table_scan"))
    filt = ir.filter_(ir.call("le", ir.col(0), ir.lit(ir.i64(), 100)),
                      scan).with_annotation(ann("filter_exec"))
    ests = {id(scan): 1000.0, id(filt): 1000.0}
    p = ps(cpu_tuple=1.0, io_seq_page=4.0, cpu_pred=0.5)
    costed = costmodel.cost_plan(filt, nation_catalog, ests, p)
    # scan: 1000 + ceil(1000*32/8192)=4 pages * 4 = 1016; filter: 500
    assert costed.cumulative_cost == pytest.approx(1016 + 500)


def test_missing_annotation(nation_catalog):
    node = ir.read("nation")
    with pytest.raises(Exception):
        costmodel.cost_plan(node, nation_catalog, {id(node): 25.0},
                            params.defaults())


def test_parameter_monotonicity(nation_catalog):
    scan = ir.read("nation").with_annotation(ann("table_scan"))
    j = ir.join("inner", ir.call("eq", ir.col(0), ir.col(4)), scan,
                ir.read("region").with_annotation(ann("table_scan"))) \
        .with_annotation(ann("hash_join", build_side="right"))
    s = ir.sort([ir.SortKey(0)], j).with_annotation(ann("sort_exec"))
    ests = cardinality.estimate_tree(s, nation_catalog)
    base = params.defaults()
    base_cost = costmodel.cost_plan(s, nation_catalog, ests, base).cumulative_cost
    for name in params.PARAM_NAMES:
        spec = params.spec_of(name)
        bumped = base.replace(**{name: min(spec.hi, max(spec.default * 2,
                                                        spec.default + 1))})
        cost = costmodel.cost_plan(s, nation_catalog, ests, bumped).cumulative_cost
        assert cost >= base_cost - 1e-12, name


def test_param_set_can_flip_plan_preference():
    # two alternative plans for one query: a second full scan of a wide
    # table vs re-filtering a large in-memory input. An IO-dominated
    # parameter set prefers the filter; a predicate-dominated set prefers
    # the extra scan. The argmin flips.
    p_io = ps(cpu_tuple=0.1, io_seq_page=100.0, cpu_pred=0.1)
    p_cpu = ps(cpu_tuple=0.1, io_seq_page=0.01, cpu_pred=50.0)

    def plan_cost(p, variant):
        scan = costmodel.cost_operator(ann("table_scan"), (), 1000, 4000, p)
        if variant == "scan_heavy":
            return 2 * scan
        return scan + costmodel.cost_operator(ann("filter_exec"),
                                              (200_000,), 10, 8, p)
    a_io, b_io = plan_cost(p_io, "scan_heavy"), plan_cost(p_io, "pred_heavy")
    a_cpu, b_cpu = plan_cost(p_cpu, "scan_heavy"), plan_cost(p_cpu, "pred_heavy")
    assert a_io > b_io          # io-heavy params: avoid the second scan
    assert a_cpu < b_cpu        # predicate-heavy params: take the scan
    assert (a_io < b_io) != (a_cpu < b_cpu)


def test_registry_json_shape():
    reg = params.registry_json()
    assert len(reg) == 60
    assert all({"name", "default", "lo", "hi", "doc"} <= set(r) for r in reg)
