"""Transformation rules: the logical side of exploration.

join-commute inserts the flipped inner join (the unordered dedup key makes
it a recorded hit rather than a new expression; physical build/broadcast
side choices carry the asymmetry). join-associate pulls one input across a
nested inner join, which together with unordered keys generates the full
bushy space. filter-into-join merges residual filters into inner join
conditions so exploration can redistribute their conjuncts.
"""

from __future__ import annotations

from .. import ir
from .memo import GroupExpression, Memo

TRANSFORMATION_RULES = ("join-commute", "join-associate", "filter-into-join")


def _join_out_ids(memo: Memo, left_gid: int, right_gid: int, join_type: str):
    l = memo.group(left_gid).out_ids
    if join_type in ("left_semi", "left_anti"):
        return tuple(l)
    return tuple(l) + tuple(memo.group(right_gid).out_ids)


def join_commute(memo: Memo, e: GroupExpression):
    if e.op != "join" or e.join_type != "inner":
        return []
    l, r = e.children
    return [GroupExpression(op="join", children=(r, l), join_type="inner",
                            condition=e.condition,
                            out_ids=_join_out_ids(memo, r, l, "inner"))]


def join_associate(memo: Memo, e: GroupExpression):
    if e.op != "join" or e.join_type != "inner":
        return []
    out = []
    for side in (0, 1):
        inner_gid = memo.find(e.children[side])
        other_gid = memo.find(e.children[1 - side])
        other_ids = set(memo.group(other_gid).out_ids)
        for inner_e in list(memo.group(inner_gid).expressions):
            if inner_e.op != "join" or inner_e.join_type != "inner":
                continue
            ga, gb = (memo.find(c) for c in inner_e.children)
            pool = ir.split_conjuncts(e.condition) \
                + ir.split_conjuncts(inner_e.condition)
            for keep, pull in ((ga, gb), (gb, ga)):
                pull_ids = set(memo.group(pull).out_ids)
                new_inner_ids = pull_ids | other_ids
                inner_conjs, top_conjs = [], []
                for c in pool:
                    refs = ir.references(c)
                    (inner_conjs if refs <= new_inner_ids else top_conjs).append(c)
                new_inner = GroupExpression(
                    op="join", children=(pull, other_gid), join_type="inner",
                    condition=ir.make_conjunction(inner_conjs),
                    out_ids=_join_out_ids(memo, pull, other_gid, "inner"))
                new_inner_gid = memo.register_group(new_inner)
                out.append(GroupExpression(
                    op="join", children=(keep, new_inner_gid), join_type="inner",
                    condition=ir.make_conjunction(top_conjs),
                    out_ids=_join_out_ids(memo, keep, new_inner_gid, "inner")))
    return out


def filter_into_join(memo: Memo, e: GroupExpression):
    if e.op != "filter":
        return []
    out = []
    child = memo.group(e.children[0])
    for je in list(child.expressions):
        if je.op != "join" or je.join_type != "inner":
            continue
        merged = ir.make_conjunction(
            ir.split_conjuncts(je.condition) + ir.split_conjuncts(e.predicate))
        out.append(GroupExpression(
            op="join", children=je.children, join_type="inner",
            condition=merged, out_ids=je.out_ids))
    return out


_RULE_FNS = {
    "join-commute": join_commute,
    "join-associate": join_associate,
    "filter-into-join": filter_into_join,
}


def explore(memo: Memo, root_gid: int, enabled_rules) -> None:
    """Expand the logical space to fixpoint with an explicit task stack."""
    rules = [rid for rid in TRANSFORMATION_RULES if rid in enabled_rules]
    stack = [("group", root_gid)]
    while stack:
        task = stack.pop()
        memo.stats["tasks"] += 1
        if task[0] == "group":
            group = memo.group(task[1])
            if group.explored:
                continue
            group.explored = True
            for e in list(group.expressions):
                stack.append(("expr", e))
        elif task[0] == "expr":
            e = task[1]
            # LIFO: child groups must pop (and fully saturate) before this
            # expression's rules bind against their expression lists
            for rid in rules:
                if rid not in e.fired_rules:
                    stack.append(("rule", rid, e))
            for c in e.children:
                stack.append(("group", c))
        else:
            _, rid, e = task
            if rid in e.fired_rules:
                continue
            e.fired_rules.add(rid)
            for new_expr in _RULE_FNS[rid](memo, e):
                gid, inserted, created = memo.insert_expression(
                    new_expr, into=e.group_id)
                if created:
                    memo.stats["rule_firings"] += 1
                    stack.append(("expr", inserted))
                    for c in inserted.children:
                        stack.append(("group", c))
