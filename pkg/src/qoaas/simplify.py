"""Cost-model-free normalization of logical plans, run to fixed point.

Every rule is semantics-preserving and strictly decreases a well-founded
measure (node count, expression size, or filter depth), so the top-down
fixed-point schedule terminates; an iteration guard of 10x node count
turns any violation into a loud FixpointOverrun instead of a hang.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from . import ir, scalars
from .errors import FixpointOverrun, UnknownRule


@dataclass(frozen=True)
class RewriteRule:
    rule_id: str
    # matches and rewrites one node; returns None when the pattern misses
    apply: Callable
    doc: str = ""


def _fold_expr(e: ir.Expression) -> ir.Expression:
    if e.expr != "call":
        return e
    args = tuple(_fold_expr(a) for a in e.args)
    folded = ir.Expression("call", fn=e.fn, args=args, to=e.to)
    if e.fn in ir.AGGREGATE_FNS or not all(a.expr == "lit" for a in args):
        return folded
    arg_types = [ir.expr_type(a, ()) for a in args]
    dtype = ir.type_of_call(e.fn, arg_types, e.to)
    value = scalars.eval_scalar(folded, (), ())
    return ir.lit(dtype, scalars.plain_literal(dtype, value))


def _map_node_exprs(node: ir.PlanNode, fn) -> Optional[ir.PlanNode]:
    """Apply fn to every expression of the node; None when nothing changed."""
    changed = False

    def conv(e):
        nonlocal changed
        out = fn(e)
        if out is not e and out != e:
            changed = True
        return out

    kwargs = {}
    if node.predicate is not None:
        kwargs["predicate"] = conv(node.predicate)
    if node.exprs is not None:
        kwargs["exprs"] = tuple(conv(e) for e in node.exprs)
    if node.condition is not None:
        kwargs["condition"] = conv(node.condition)
    if node.measures is not None:
        kwargs["measures"] = tuple(
            ir.Expression("call", fn=m.fn,
                          args=tuple(conv(a) for a in m.args), to=m.to)
            for m in node.measures)
    if not changed:
        return None
    return replace(node, **kwargs)


def rule_constant_folding(node, ctx):
    return _map_node_exprs(node, _fold_expr)


def rule_remove_trivial_filter(node, ctx):
    if node.op != "filter" or node.predicate.expr != "lit":
        return None
    if node.predicate.value is True:
        return node.children[0]
    # false or null predicate: nothing passes; keep the schema via a
    # synthetic zero-row read
    schema = ctx.schema(node.children[0])
    return ir.read(ir.EMPTY_TABLE, inline_schema=schema)


def rule_merge_adjacent_filters(node, ctx):
    if node.op != "filter" or node.children[0].op != "filter":
        return None
    inner = node.children[0]
    merged = ir.call("and", node.predicate, inner.predicate)
    return ir.filter_(merged, inner.children[0])


def rule_filter_pushdown(node, ctx):
    if node.op != "filter":
        return None
    child = node.children[0]
    if child.op == "project":
        pushed = ir.substitute(node.predicate, list(child.exprs))
        return ir.project(child.exprs, ir.filter_(pushed, child.children[0]))
    if child.op == "union_all":
        a, b = child.children
        return ir.union_all(ir.filter_(node.predicate, a),
                            ir.filter_(node.predicate, b))
    if child.op == "join":
        return _push_into_join(node, child, ctx)
    return None


def _push_into_join(filt, join_node, ctx):
    lw = len(ctx.schema(join_node.children[0]))
    out_w = len(ctx.schema(join_node))
    jt = join_node.join_type
    left_ok = jt in ("inner", "left", "left_semi", "left_anti")
    right_ok = jt in ("inner", "right") and out_w > lw

    to_left, to_right, keep = [], [], []
    for c in ir.split_conjuncts(filt.predicate):
        refs = ir.references(c)
        if left_ok and refs and all(o < lw for o in refs):
            to_left.append(c)
        elif right_ok and refs and all(o >= lw for o in refs):
            to_right.append(ir.remap_expr(c, {o: o - lw for o in refs}))
        else:
            keep.append(c)
    if not to_left and not to_right:
        return None
    left, right = join_node.children
    if to_left:
        left = ir.filter_(ir.make_conjunction(to_left), left)
    if to_right:
        right = ir.filter_(ir.make_conjunction(to_right), right)
    out = replace(join_node, children=(left, right))
    if keep:
        out = ir.filter_(ir.make_conjunction(keep), out)
    return out


def rule_projection_pruning(node, ctx):
    if node.op != "project":
        return None
    child = node.children[0]
    if child.op == "join":
        return _prune_join(node, child, ctx)
    if child.op == "aggregate":
        return _prune_aggregate(node, child, ctx)
    return None


def _is_narrow_colref_project(n: ir.PlanNode) -> bool:
    return n.op == "project" and all(e.expr == "col" for e in n.exprs)


def _prune_join(proj, join_node, ctx):
    left, right = join_node.children
    if _is_narrow_colref_project(left) or _is_narrow_colref_project(right):
        return None
    lw, rw = len(ctx.schema(left)), len(ctx.schema(right))
    semi = join_node.join_type in ("left_semi", "left_anti")
    used_out = set()
    for e in proj.exprs:
        used_out |= ir.references(e)
    cond_refs = ir.references(join_node.condition) \
        if join_node.condition is not None else set()
    used_l = {o for o in used_out if o < lw} | {o for o in cond_refs if o < lw}
    used_r = {o - lw for o in cond_refs if o >= lw}
    if not semi:
        used_r |= {o - lw for o in used_out if o >= lw}
    keep_l = sorted(used_l) or [0]
    keep_r = sorted(used_r) or [0]
    if len(keep_l) == lw and len(keep_r) == rw:
        return None
    lmap = {o: i for i, o in enumerate(keep_l)}
    rmap = {o: i for i, o in enumerate(keep_r)}
    new_lw = len(keep_l)
    cond = join_node.condition
    if cond is not None:
        cond = ir.remap_expr(cond, {
            o: (lmap[o] if o < lw else new_lw + rmap[o - lw])
            for o in cond_refs})
    out_map = {o: lmap[o] for o in used_out if o < lw}
    if not semi:
        out_map.update({o: new_lw + rmap[o - lw] for o in used_out if o >= lw})
    new_join = replace(
        join_node, condition=cond,
        children=(ir.project([ir.col(o) for o in keep_l], left),
                  ir.project([ir.col(o) for o in keep_r], right)))
    new_exprs = [ir.remap_expr(e, out_map) for e in proj.exprs]
    return ir.project(new_exprs, new_join)


def _prune_aggregate(proj, agg, ctx):
    child = agg.children[0]
    if _is_narrow_colref_project(child):
        return None
    w = len(ctx.schema(child))
    used = set(agg.group_keys)
    for m in agg.measures:
        for a in m.args:
            used |= ir.references(a)
    keep = sorted(used) or [0]
    if len(keep) == w:
        return None
    mapping = {o: i for i, o in enumerate(keep)}
    new_keys = tuple(mapping[k] for k in agg.group_keys)
    new_measures = tuple(
        ir.Expression("call", fn=m.fn,
                      args=tuple(ir.remap_expr(a, mapping) for a in m.args),
                      to=m.to)
        for m in agg.measures)
    narrowed = ir.project([ir.col(o) for o in keep], child)
    return ir.project(proj.exprs,
                      replace(agg, children=(narrowed,), group_keys=new_keys,
                              measures=new_measures))


def rule_eliminate_redundant_project(node, ctx):
    if node.op != "project":
        return None
    child = node.children[0]
    width = len(ctx.schema(child))
    identity = (len(node.exprs) == width and all(
        e.expr == "col" and e.ordinal == i for i, e in enumerate(node.exprs)))
    if identity:
        return child
    if child.op == "project":
        composed = [ir.substitute(e, list(child.exprs)) for e in node.exprs]
        return ir.project(composed, child.children[0])
    return None


RULES: tuple[RewriteRule, ...] = (
    RewriteRule("constant-folding", rule_constant_folding,
                "evaluate literal-only scalar calls"),
    RewriteRule("remove-trivial-filter", rule_remove_trivial_filter,
                "drop always-true filters, empty out always-false ones"),
    RewriteRule("merge-adjacent-filters", rule_merge_adjacent_filters,
                "conjoin stacked filters"),
    RewriteRule("filter-pushdown", rule_filter_pushdown,
                "move filters below projections, unions, and join sides"),
    RewriteRule("projection-pruning", rule_projection_pruning,
                "narrow join and aggregate inputs to used columns"),
    RewriteRule("eliminate-redundant-project", rule_eliminate_redundant_project,
                "drop identity projections, compose stacked ones"),
)

RULES_BY_ID = {r.rule_id: r for r in RULES}
SIMPLIFIER_RULE_IDS = tuple(r.rule_id for r in RULES)


def apply_rule(rule_id: str, node: ir.PlanNode, catalog) -> Optional[ir.PlanNode]:
    """Unit-level access: apply one rule at the root of a node."""
    if rule_id not in RULES_BY_ID:
        raise UnknownRule(rule_id)
    return RULES_BY_ID[rule_id].apply(node, ir.SchemaContext(catalog))


def _count(node: ir.PlanNode) -> int:
    return 1 + sum(_count(c) for c in node.children)


def simplify(doc: ir.PlanDocument, catalog, target_engines=None,
             disabled_rules=(), fire_log: Optional[list] = None) -> ir.PlanDocument:
    """Normalize to fixed point under the engine-gated rule set."""
    active = []
    for rule in RULES:
        if rule.rule_id in disabled_rules:
            continue
        if target_engines:
            if not any(catalog.engine(e).supports_rule(rule.rule_id)
                       for e in target_engines):
                continue
        active.append(rule)

    root = doc.root
    node_count = _count(root)
    guard = 10 * max(1, node_count)
    for _ in range(guard):
        ctx = ir.SchemaContext(catalog)
        new_root, fired = _apply_once(root, active, ctx, fire_log)
        if not fired:
            return replace(doc, root=new_root)
        root = new_root
    raise FixpointOverrun(
        f"simplifier exceeded {guard} iterations; a rule fails to converge")


def _apply_once(node, rules, ctx, fire_log):
    """Top-down single rewrite: first matching rule wins; otherwise recurse."""
    for rule in rules:
        out = rule.apply(node, ctx)
        if out is not None:
            if fire_log is not None:
                fire_log.append(rule.rule_id)
            return out, True
    new_children = []
    fired = False
    for c in node.children:
        nc, f = _apply_once(c, rules, ctx, fire_log)
        new_children.append(nc)
        fired = fired or f
        if fired:
            # rebuild with remaining children untouched this pass
            new_children.extend(node.children[len(new_children):])
            break
    if fired:
        return node.with_children(tuple(new_children)), True
    return node, False
