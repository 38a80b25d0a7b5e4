"""Formula-based operator costing.

Each physical operator's local cost is a weighted sum of basic operations
on the estimated rows; every formula is linear in each parameter, so
increasing any weight never reduces any plan's cost. Page size is fixed at
8192 bytes. On partitioned engines the terms priced by cpu_* weights are
divided by the partition count (work spreads across partitions); IO,
memory, and network terms are not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import ir
from .errors import MissingAnnotation
from .params import ParamSet

PAGE_SIZE = 8192


@dataclass
class CostedNode:
    node: ir.PlanNode
    local_cost: float
    cumulative_cost: float
    est_rows: float
    children: list


def cost_operator(annotation: ir.PhysicalAnnotation,
                  est_in: tuple,
                  est_out: float,
                  width: int,
                  params: ParamSet,
                  partition_count: int = 1,
                  n_conjuncts: int = 1,
                  n_exprs: int = 1) -> float:
    """Local cost of one physical operator.

    ``est_in`` holds per-child input rows, ``est_out`` output rows,
    ``width`` the byte width of the rows flowing through (output rows for
    scans, moved rows for exchanges).
    """
    p = params.get
    P = max(1, partition_count)
    op = annotation.op

    def cpu(term: float) -> float:
        return term / P

    if op == "table_scan":
        pages = math.ceil(est_out * width / PAGE_SIZE) if est_out > 0 else 0
        return (cpu(est_out * p("cpu_tuple") * p("scan_tuple_factor"))
                + pages * p("io_seq_page") * p("scan_page_factor")
                + cpu(est_out * width * p("cpu_byte"))
                + p("scan_fixed"))
    if op == "filter_exec":
        rows = est_in[0]
        return (cpu(rows * p("cpu_pred") * n_conjuncts * p("filter_pred_factor"))
                + rows * p("filter_tuple") + p("filter_fixed"))
    if op == "project_exec":
        rows = est_in[0]
        return (cpu(rows * p("cpu_expr") * n_exprs * p("project_expr_factor"))
                + rows * p("project_tuple") + p("project_fixed"))
    if op == "hash_join":
        left, right = est_in
        build, probe = (left, right) if annotation.build_side == "left" \
            else (right, left)
        return (cpu(build * p("cpu_hash_build") * p("hash_build_factor"))
                + cpu(probe * p("cpu_hash_probe") * p("hash_probe_factor"))
                + cpu(est_out * p("cpu_tuple") * p("hash_output_factor"))
                + build * p("mem_hash_entry") * p("hash_mem_factor")
                + p("join_fixed"))
    if op == "sort_merge_join":
        left, right = est_in
        return (cpu((left + right) * p("cpu_compare") * p("smj_compare_factor"))
                + cpu(est_out * p("cpu_tuple") * p("smj_output_factor"))
                + p("join_fixed"))
    if op == "nested_loop_join":
        outer, inner = est_in
        return (cpu(outer * inner * p("cpu_pred") * p("nlj_pair_factor"))
                + cpu(est_out * p("cpu_tuple") * p("nlj_output_factor"))
                + p("join_fixed"))
    if op == "sort_exec":
        n = est_in[0]
        comparisons = n * math.log2(max(n, 2.0))
        return (cpu(comparisons * p("cpu_compare") * p("sort_spill_factor")
                    * p("sort_compare_factor"))
                + n * p("mem_sort_entry") + n * p("sort_tuple")
                + p("sort_fixed"))
    if op == "hash_aggregate":
        rows, groups = est_in[0], est_out
        return (cpu(rows * p("cpu_hash_build") * p("hashagg_input_factor"))
                + groups * p("agg_group_overhead") * p("hashagg_group_factor")
                + groups * p("mem_agg_entry") + p("agg_fixed"))
    if op == "stream_aggregate":
        rows, groups = est_in[0], est_out
        return (cpu(rows * p("cpu_tuple") * p("streamagg_tuple_factor"))
                + groups * p("streamagg_group_overhead") + p("agg_fixed"))
    if op == "union_all_exec":
        return (cpu(sum(est_in) * p("cpu_tuple") * p("union_tuple_factor"))
                + p("union_fixed"))
    if op == "limit_exec":
        return (cpu(est_out * p("cpu_tuple") * p("limit_tuple_factor"))
                + p("limit_fixed"))
    if op == "shuffle_exchange":
        rows = est_in[0]
        return (rows * width * p("net_byte") * p("shuffle_byte_factor")
                + rows * p("net_tuple")
                + p("exchange_setup") * p("exchange_setup_factor")
                + p("shuffle_fixed"))
    if op == "broadcast_exchange":
        rows = est_in[0]
        return (rows * width * p("net_byte") * P * p("broadcast_byte_factor")
                + rows * p("net_tuple")
                + p("exchange_setup") * p("exchange_setup_factor")
                + p("broadcast_fixed"))
    if op == "gather_exchange":
        rows = est_in[0]
        return (rows * width * p("net_byte") * p("gather_byte_factor")
                + rows * p("net_tuple") + p("gather_fixed"))
    if op == "engine_bridge":
        rows = est_in[0]
        return (rows * width * p("bridge_byte") * p("bridge_byte_factor")
                + p("bridge_fixed") * p("bridge_fixed_factor")
                + rows * p("bridge_tuple") + rows * p("mem_bridge_row"))
    raise MissingAnnotation(f"no cost formula for physical op {op!r}")


def shape_of_node(node: ir.PlanNode) -> tuple[int, int]:
    """(n_conjuncts, n_exprs) as the formulas count them."""
    n_conjuncts = 1
    n_exprs = 1
    if node.op == "filter":
        n_conjuncts = max(1, len(ir.split_conjuncts(node.predicate)))
    if node.op == "project":
        n_exprs = max(1, len(node.exprs))
    return n_conjuncts, n_exprs


def cost_node(node: ir.PlanNode,
              est_in: tuple,
              est_out: float,
              width: int,
              params: ParamSet,
              partition_count: int = 1) -> float:
    if node.annotation is None:
        raise MissingAnnotation(f"node {node.op} lacks a physical annotation")
    n_conjuncts, n_exprs = shape_of_node(node)
    return cost_operator(node.annotation, est_in, est_out, width, params,
                         partition_count, n_conjuncts, n_exprs)


def cost_plan(root: ir.PlanNode,
              catalog,
              est_rows: dict,
              params_for_engine,
              overrides=None) -> CostedNode:
    """Cost a fully annotated, estimated tree bottom-up.

    ``est_rows`` maps id(node) to estimated output rows; build it with
    cardinality.estimate_tree. ``params_for_engine`` is either a ParamSet
    (applied to every engine) or a callable engine-id -> ParamSet.
    """
    ctx = ir.SchemaContext(catalog)

    def params_of(engine: str) -> ParamSet:
        if isinstance(params_for_engine, ParamSet):
            return params_for_engine
        return params_for_engine(engine)

    def walk(node: ir.PlanNode) -> CostedNode:
        children = [walk(c) for c in node.children]
        if node.annotation is None:
            raise MissingAnnotation(f"node {node.op} lacks a physical annotation")
        engine = node.annotation.engine
        partition_count = catalog.engine(engine).partition_count \
            if engine else 1
        est_in = tuple(c.est_rows for c in children)
        est_out = est_rows[id(node)]
        width = ir.row_width(ctx.schema(node))
        local = cost_node(node, est_in, est_out, width,
                          params_of(engine), partition_count)
        return CostedNode(node=node, local_cost=local,
                          cumulative_cost=local + sum(c.cumulative_cost
                                                      for c in children),
                          est_rows=est_out, children=children)

    return walk(root)
