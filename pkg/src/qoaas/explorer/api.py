"""Public optimize entry point: memo construction, exploration, winner
search, and extraction into an annotated plan document."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .. import cardinality, costmodel, ir
from .. import params as params_mod
from ..errors import NoValidPlan
from .memo import Memo
from .rules import TRANSFORMATION_RULES, explore
from .search import DIST_SINGLETON, Props, Search


@dataclass
class OptimizeRequest:
    doc: ir.PlanDocument
    target_engines: list
    mode: str = "full"                      # v1 | v2 | full
    params: Union[None, params_mod.ParamSet, dict] = None
    overrides: Optional[cardinality.CardinalityOverrides] = None
    variant: str = "A"
    disabled_rules: tuple = ()


@dataclass
class AnnotatedPlan:
    doc: ir.PlanDocument          # logical tree, physically annotated
    root_cost: float
    root_engine: str
    memo_stats: dict = field(default_factory=dict)
    est_rows: dict = field(default_factory=dict)   # id(node) -> rows
    variant: str = "A"


def _strip(node: ir.PlanNode) -> ir.PlanNode:
    return node.with_children(tuple(_strip(c) for c in node.children)) \
        .with_annotation(None)


def params_resolver(catalog, request_params):
    """engine-id -> ParamSet, honoring per-engine profile overrides."""
    def resolve(engine: str) -> params_mod.ParamSet:
        if isinstance(request_params, params_mod.ParamSet):
            return request_params
        if isinstance(request_params, dict) and engine in request_params:
            got = request_params[engine]
            if isinstance(got, params_mod.ParamSet):
                return got
            return params_mod.defaults().replace(provenance="request", **got)
        profile = catalog.engine(engine)
        if profile.cost_param_overrides:
            return params_mod.defaults().replace(
                provenance=f"profile:{engine}", **profile.cost_param_overrides)
        return params_mod.defaults()
    return resolve


def optimize(req: OptimizeRequest, catalog) -> AnnotatedPlan:
    """Cost-based search over the simplified logical plan.

    The returned plan carries a physical annotation on every node, its
    root satisfies singleton distribution, and with a single target engine
    it contains no engine bridges.
    """
    if not req.target_engines:
        raise NoValidPlan("no target engines")
    for e in req.target_engines:
        catalog.engine(e)   # raises UnknownEngine
    ir.require_valid(req.doc, catalog)

    memo = Memo(catalog, req.overrides)
    root_gid, root_ids = memo.copy_in(_strip(req.doc.root))

    enabled = set()
    for rid in TRANSFORMATION_RULES:
        if rid in req.disabled_rules:
            continue
        if any(catalog.engine(e).supports_rule(rid)
               for e in req.target_engines):
            enabled.add(rid)
    explore(memo, root_gid, enabled)

    search = Search(memo, catalog, params_resolver(catalog, req.params),
                    req.target_engines)
    candidates = []
    for engine in req.target_engines:
        props = Props(engine, DIST_SINGLETON, ())
        w = search.winner(root_gid, props)
        if w.alt is not None:
            candidates.append((w.cost, engine, props))
    if not candidates:
        raise NoValidPlan(
            "no engine can implement every operator of this plan "
            f"(targets: {req.target_engines})")
    candidates.sort(key=lambda c: (c[0], c[1]))
    best_cost, best_engine, best_props = candidates[0]

    node, out_ids = search.extract(root_gid, best_props)
    if tuple(out_ids) != tuple(root_ids):
        # restore the caller's output column order
        pos = {cid: i for i, cid in enumerate(out_ids)}
        exprs = [ir.col(pos[cid]) for cid in root_ids]
        node = ir.project(exprs, node).with_annotation(
            ir.PhysicalAnnotation(op="project_exec", engine=best_engine))
        profile = catalog.engine(best_engine)
        best_cost += costmodel.cost_operator(
            node.annotation, (memo.rows(root_gid),), memo.rows(root_gid),
            memo.width_of_ids(root_ids),
            search.params_for(best_engine), profile.partition_count,
            n_exprs=max(1, len(exprs)))

    annotated = ir.PlanDocument(root=node, query_id=req.doc.query_id,
                                extensions=req.doc.extensions)
    est = cardinality.estimate_tree(node, catalog, req.overrides)
    stats = dict(memo.stats)
    stats["winner_engine"] = best_engine
    return AnnotatedPlan(doc=annotated, root_cost=best_cost,
                         root_engine=best_engine, memo_stats=stats,
                         est_rows=est, variant=req.variant)


def explain_text(plan: AnnotatedPlan, catalog,
                 params=None) -> str:
    """Human-readable per-node tree with rows, costs, and engines."""
    resolver = params_resolver(catalog, params)
    costed = costmodel.cost_plan(plan.doc.root, catalog, plan.est_rows,
                                 resolver)
    lines = [f"plan cost={costed.cumulative_cost:.3f} "
             f"engine={plan.root_engine} variant={plan.variant}"]

    def walk(cn, depth):
        node = cn.node
        ann = node.annotation
        label = node.op if ann is None else f"{node.op} [{ann.op}@{ann.engine}]"
        extra = ""
        if ann is not None and ann.build_side:
            extra = f" build={ann.build_side}"
        lines.append(f"{'  ' * depth}{label}{extra} rows={cn.est_rows:.1f} "
                     f"local={cn.local_cost:.3f} total={cn.cumulative_cost:.3f}")
        for c in cn.children:
            walk(c, depth + 1)

    walk(costed, 1)
    return "\n".join(lines)
