"""Winner search over the explored memo.

Required physical properties are (engine, distribution, within-partition
ordering); distribution and ordering requirements are satisfied either by
implementations that produce them or by enforcers (sort, exchanges, engine
bridges). Winners are computed demand-driven with an explicit task stack;
per-(group, properties) winner costs never increase once recorded.

Engine bridges are considered at most once per group chain (a bridge's
input winner may not itself start with a bridge at the same group), which
is lossless: with positive bridge costs a same-group multi-hop chain is
always dominated by the pure plan it returns to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .. import costmodel, ir
from ..errors import MemoInternalError, NoValidPlan
from .memo import GroupExpression, Memo, materialize

DIST_ANY = ("any",)
DIST_SINGLETON = ("singleton",)
DIST_BROADCAST = ("broadcast",)
DIST_ARBITRARY = ("arbitrary",)

INFEASIBLE = math.inf


def dist_hash(ids) -> tuple:
    return ("hash", tuple(ids))


@dataclass(frozen=True)
class Props:
    engine: str
    dist: tuple = DIST_ANY
    ordering: tuple = ()
    allow_bridge: bool = True


def normalize_props(props: Props, profile) -> Props:
    if profile.partition_count == 1 and props.dist != DIST_SINGLETON:
        return replace(props, dist=DIST_SINGLETON)
    return props


def satisfies_dist(provided: tuple, required: tuple) -> bool:
    return required == DIST_ANY or provided == required


def satisfies_ordering(provided: tuple, required: tuple) -> bool:
    return provided[:len(required)] == tuple(required)


@dataclass
class Alt:
    kind: str                      # "impl" | "enforcer"
    phys_op: str
    child_reqs: list               # [(gid, Props)]
    provides_dist: tuple
    provides_ordering: tuple = ()
    expr: Optional[GroupExpression] = None
    build_side: Optional[str] = None
    sort_keys: tuple = ()          # (id, dir) for sort enforcers
    hash_ids: tuple = ()           # ids for shuffle enforcers
    bridge_from: Optional[str] = None
    auto: bool = False             # pass-through: satisfies by construction
    local_cost: float = 0.0
    total_cost: float = INFEASIBLE


@dataclass
class Winner:
    cost: float
    alt: Optional[Alt]


class Search:
    def __init__(self, memo: Memo, catalog, params_for_engine,
                 target_engines):
        self.memo = memo
        self.catalog = catalog
        self.params_for = params_for_engine
        self.targets = list(target_engines)
        self._in_progress: set = set()
        self.stats = memo.stats
        self.stats.setdefault("pruned_alternatives", 0)
        self.stats.setdefault("winner_updates", 0)
        # (gid, props, cost) every time a best-so-far improves; winner cost
        # per key is non-increasing over this log by construction, and the
        # tests assert it stays that way
        self.winner_log: list = []

    # -- public

    def winner(self, gid: int, props: Props) -> Winner:
        gid = self.memo.find(gid)
        props = normalize_props(props, self.profile(props.engine))
        self._run(gid, props)
        return self.memo.group(gid).winners[props]

    def profile(self, engine: str):
        return self.catalog.engine(engine)

    # -- task loop

    def _run(self, gid: int, props: Props) -> None:
        stack: list = [("opt", gid, props)]
        while stack:
            task = stack.pop()
            self.stats["tasks"] += 1
            if task[0] == "opt":
                self._task_opt(task[1], task[2], stack)
            else:
                self._task_eval(task[1], task[2], task[3])

    def _task_opt(self, gid: int, props: Props, stack: list) -> None:
        gid = self.memo.find(gid)
        group = self.memo.group(gid)
        if props in group.winners:
            return
        key = (gid, props)
        if key in self._in_progress:
            raise MemoInternalError(f"cyclic property requirement {key}")
        self._in_progress.add(key)
        alts = self._alternatives(gid, props)
        stack.append(("eval", gid, props, alts))
        pending = set()
        for alt in alts:
            for cgid, cprops in alt.child_reqs:
                cgid = self.memo.find(cgid)
                cprops = normalize_props(cprops, self.profile(cprops.engine))
                ckey = (cgid, cprops)
                if ckey not in pending and cprops not in \
                        self.memo.group(cgid).winners:
                    pending.add(ckey)
                    stack.append(("opt", cgid, cprops))

    def _task_eval(self, gid: int, props: Props, alts: list) -> None:
        group = self.memo.group(gid)
        best: Optional[Alt] = None
        ties: list = []
        for alt in alts:
            total = alt.local_cost
            feasible = True
            for cgid, cprops in alt.child_reqs:
                cprops = normalize_props(cprops, self.profile(cprops.engine))
                w = self.memo.group(cgid).winners.get(cprops)
                if w is None or w.cost == INFEASIBLE:
                    feasible = False
                    break
                total += w.cost
                if best is not None and total > best.total_cost:
                    # provably worse than a known complete alternative
                    feasible = False
                    self.stats["pruned_alternatives"] += 1
                    break
            if not feasible:
                continue
            alt.total_cost = total
            if best is None or total < best.total_cost:
                best = alt
                ties = [alt]
                self.stats["winner_updates"] += 1
                self.winner_log.append((gid, props, total))
            elif total == best.total_cost:
                ties.append(alt)
        if best is not None and len(ties) > 1:
            best = self._break_tie(gid, props, ties)
        group.winners[props] = Winner(best.total_cost if best else INFEASIBLE,
                                      best)
        self._in_progress.discard((gid, props))

    def _break_tie(self, gid: int, props: Props, ties: list) -> Alt:
        """Equal-cost candidates: smallest canonical encoding wins."""
        def encoding(alt: Alt) -> bytes:
            node, _ = self._extract_alt(gid, props, alt)
            return ir.encode_canonical(ir.PlanDocument(root=node))
        return min(ties, key=encoding)

    # -- alternative generation

    def _alternatives(self, gid: int, props: Props) -> list:
        group = self.memo.group(gid)
        profile = self.profile(props.engine)
        alts: list = []
        for expr in group.expressions:
            alts.extend(self._impl_alts(expr, gid, props, profile))
        alts.extend(self._enforcer_alts(gid, props, profile))
        return alts

    def _impl_alts(self, e: GroupExpression, gid: int, props: Props,
                   profile) -> list:
        memo = self.memo
        eng = props.engine
        P = profile.partition_count
        singleton = DIST_SINGLETON
        out: list = []

        def supported(op: str) -> bool:
            return profile.supports_op(op)

        def req(child_gid, dist, ordering=()):
            return (child_gid, Props(eng, dist, tuple(ordering)))

        def add(phys_op, child_reqs, provides_dist, provides_ordering=(),
                auto=False, **extra):
            if not supported(phys_op):
                return
            alt = Alt(kind="impl", phys_op=phys_op, child_reqs=child_reqs,
                      provides_dist=provides_dist,
                      provides_ordering=tuple(provides_ordering),
                      expr=e, auto=auto, **extra)
            if auto or (satisfies_dist(alt.provides_dist, props.dist)
                        and satisfies_ordering(alt.provides_ordering,
                                               props.ordering)):
                alt.local_cost = self._impl_cost(e, gid, alt, props)
                out.append(alt)

        if e.op == "read":
            if e.table not in (ir.EMPTY_TABLE, ir.BRIDGE_TABLE):
                pinned = self.catalog.table(e.table).pinned_engine
                if pinned is not None and pinned != eng:
                    return out
            provides = singleton if P == 1 else DIST_ARBITRARY
            add("table_scan", [], provides)
            return out

        if e.op == "filter":
            add("filter_exec", [req(e.children[0], props.dist,
                                    props.ordering)],
                props.dist, props.ordering, auto=True)
            return out

        if e.op == "project":
            needed = set()
            if props.dist[0] == "hash":
                needed |= set(props.dist[1])
            needed |= {i for (i, _) in props.ordering}
            child_ids = set(memo.group(e.children[0]).out_ids)
            if needed <= child_ids:
                add("project_exec", [req(e.children[0], props.dist,
                                         props.ordering)],
                    props.dist, props.ordering, auto=True)
            return out

        if e.op == "join":
            return self._join_alts(e, gid, props, profile)

        if e.op == "aggregate":
            keys = e.group_keys
            ordering = tuple((k, "asc") for k in keys)
            if not keys:
                child = [req(e.children[0], singleton)]
                add("hash_aggregate", child, singleton)
                add("stream_aggregate", [req(e.children[0], singleton)],
                    singleton)
            elif P == 1:
                add("hash_aggregate", [req(e.children[0], singleton)],
                    singleton)
                add("stream_aggregate",
                    [req(e.children[0], singleton, ordering)], singleton)
            else:
                add("hash_aggregate",
                    [req(e.children[0], dist_hash(keys))], dist_hash(keys))
                add("stream_aggregate",
                    [req(e.children[0], dist_hash(keys), ordering)],
                    dist_hash(keys))
            return out

        if e.op == "sort":
            if satisfies_ordering(e.sort_keys, props.ordering):
                add("sort_exec", [req(e.children[0], props.dist)],
                    props.dist, e.sort_keys)
            return out

        if e.op == "union_all":
            if P == 1:
                add("union_all_exec",
                    [req(e.children[0], singleton), req(e.children[1], singleton)],
                    singleton)
            else:
                add("union_all_exec",
                    [req(e.children[0], DIST_ANY), req(e.children[1], DIST_ANY)],
                    DIST_ARBITRARY)
                add("union_all_exec",
                    [req(e.children[0], singleton), req(e.children[1], singleton)],
                    singleton)
            return out

        if e.op == "limit":
            child_group = memo.group(e.children[0])
            child_rep = child_group.expressions[0]
            ordering = child_rep.sort_keys if child_rep.op == "sort" else ()
            add("limit_exec", [req(e.children[0], singleton, ordering)],
                singleton, ordering)
            return out

        raise MemoInternalError(f"unknown op {e.op}")

    def _join_alts(self, e: GroupExpression, gid: int, props: Props,
                   profile) -> list:
        memo = self.memo
        eng = props.engine
        P = profile.partition_count
        jt = e.join_type
        equi, _residual = memo.classify_condition(e)
        lgid, rgid = e.children
        out: list = []

        def add(phys_op, child_reqs, provides_dist, build_side=None):
            if not profile.supports_op(phys_op):
                return
            alt = Alt(kind="impl", phys_op=phys_op, child_reqs=child_reqs,
                      provides_dist=provides_dist, expr=e,
                      build_side=build_side)
            if satisfies_dist(alt.provides_dist, props.dist) \
                    and satisfies_ordering((), props.ordering):
                alt.local_cost = self._impl_cost(e, gid, alt, props)
                out.append(alt)

        lkeys = tuple(a for (a, _) in equi)
        rkeys = tuple(b for (_, b) in equi)
        ord_l = tuple((a, "asc") for a in lkeys)
        ord_r = tuple((b, "asc") for b in rkeys)
        # after co-partitioned joins the preserved left side stays hashed;
        # right/full outer emit null-extended rows outside any bucket
        copart_provides = dist_hash(lkeys) \
            if jt in ("inner", "left", "left_semi", "left_anti") \
            else DIST_ARBITRARY
        broadcast_sides = {"inner": ("left", "right"), "left": ("right",),
                           "right": ("left",), "full": (),
                           "left_semi": ("right",), "left_anti": ("right",)}[jt]

        if equi:
            if P == 1:
                for b in ("left", "right"):
                    add("hash_join",
                        [(lgid, Props(eng, DIST_SINGLETON)),
                         (rgid, Props(eng, DIST_SINGLETON))],
                        DIST_SINGLETON, build_side=b)
                add("sort_merge_join",
                    [(lgid, Props(eng, DIST_SINGLETON, ord_l)),
                     (rgid, Props(eng, DIST_SINGLETON, ord_r))],
                    DIST_SINGLETON)
            else:
                for b in ("left", "right"):
                    add("hash_join",
                        [(lgid, Props(eng, dist_hash(lkeys))),
                         (rgid, Props(eng, dist_hash(rkeys)))],
                        copart_provides, build_side=b)
                for side in broadcast_sides:
                    reqs = [(lgid, Props(eng, DIST_BROADCAST if side == "left"
                                         else DIST_ANY)),
                            (rgid, Props(eng, DIST_BROADCAST if side == "right"
                                         else DIST_ANY))]
                    add("hash_join", reqs, DIST_ARBITRARY, build_side=side)
                add("sort_merge_join",
                    [(lgid, Props(eng, dist_hash(lkeys), ord_l)),
                     (rgid, Props(eng, dist_hash(rkeys), ord_r))],
                    copart_provides)
        if P == 1:
            add("nested_loop_join",
                [(lgid, Props(eng, DIST_SINGLETON)),
                 (rgid, Props(eng, DIST_SINGLETON))],
                DIST_SINGLETON)
        return out

    def _enforcer_alts(self, gid: int, props: Props, profile) -> list:
        memo = self.memo
        eng = props.engine
        P = profile.partition_count
        out: list = []

        def inner(dist, ordering=(), engine=eng, allow_bridge=None):
            ab = props.allow_bridge if allow_bridge is None else allow_bridge
            return (gid, Props(engine, dist, tuple(ordering), ab))

        if props.ordering and profile.supports_op("sort_exec"):
            out.append(Alt(kind="enforcer", phys_op="sort_exec",
                           child_reqs=[inner(props.dist)],
                           provides_dist=props.dist,
                           provides_ordering=props.ordering,
                           sort_keys=props.ordering,
                           local_cost=self._enforcer_cost("sort_exec", gid,
                                                          props)))
            return out
        if P > 1 and not props.ordering:
            if props.dist == DIST_SINGLETON and \
                    profile.supports_op("gather_exchange"):
                out.append(Alt(kind="enforcer", phys_op="gather_exchange",
                               child_reqs=[inner(DIST_ANY)],
                               provides_dist=DIST_SINGLETON,
                               local_cost=self._enforcer_cost(
                                   "gather_exchange", gid, props)))
            if props.dist[0] == "hash" and \
                    profile.supports_op("shuffle_exchange"):
                out.append(Alt(kind="enforcer", phys_op="shuffle_exchange",
                               child_reqs=[inner(DIST_ANY)],
                               provides_dist=props.dist,
                               hash_ids=props.dist[1],
                               local_cost=self._enforcer_cost(
                                   "shuffle_exchange", gid, props)))
            if props.dist == DIST_BROADCAST and \
                    profile.supports_op("broadcast_exchange"):
                out.append(Alt(kind="enforcer", phys_op="broadcast_exchange",
                               child_reqs=[inner(DIST_ANY)],
                               provides_dist=DIST_BROADCAST,
                               local_cost=self._enforcer_cost(
                                   "broadcast_exchange", gid, props)))
        if props.allow_bridge and len(self.targets) > 1 \
                and not props.ordering \
                and props.dist in (DIST_ANY, DIST_SINGLETON):
            for other in self.targets:
                if other == eng:
                    continue
                out.append(Alt(
                    kind="enforcer", phys_op="engine_bridge",
                    child_reqs=[inner(DIST_SINGLETON, engine=other,
                                      allow_bridge=False)],
                    provides_dist=DIST_SINGLETON, bridge_from=other,
                    local_cost=self._enforcer_cost("engine_bridge", gid,
                                                   props)))
        return out

    # -- costing

    def _impl_cost(self, e: GroupExpression, gid: int, alt: Alt,
                   props: Props) -> float:
        memo = self.memo
        profile = self.profile(props.engine)
        params = self.params_for(props.engine)
        est_in = tuple(memo.rows(c) for c in e.children)
        est_out = memo.rows(gid)
        width = memo.width_of_ids(memo.group(gid).out_ids)
        n_conjuncts = n_exprs = 1
        if e.op == "filter":
            n_conjuncts = max(1, len(ir.split_conjuncts(e.predicate)))
        if e.op == "project":
            n_exprs = max(1, len(e.exprs))
        ann = ir.PhysicalAnnotation(op=alt.phys_op, engine=props.engine,
                                    build_side=alt.build_side)
        return costmodel.cost_operator(ann, est_in, est_out, width, params,
                                       profile.partition_count, n_conjuncts,
                                       n_exprs)

    def _enforcer_cost(self, phys_op: str, gid: int, props: Props) -> float:
        memo = self.memo
        profile = self.profile(props.engine)
        params = self.params_for(props.engine)
        rows = memo.rows(gid)
        width = memo.width_of_ids(memo.group(gid).out_ids)
        ann = ir.PhysicalAnnotation(op=phys_op, engine=props.engine)
        return costmodel.cost_operator(ann, (rows,), rows, width, params,
                                       profile.partition_count)

    # -- plan extraction

    def extract(self, gid: int, props: Props):
        """Materialize the winning physical tree; returns (node, id order)."""
        gid = self.memo.find(gid)
        props = normalize_props(props, self.profile(props.engine))
        w = self.memo.group(gid).winners.get(props)
        if w is None or w.alt is None:
            raise NoValidPlan(f"no winner for group {gid} under {props}")
        return self._extract_alt(gid, props, w.alt)

    def _extract_alt(self, gid: int, props: Props, alt: Alt):
        if alt.kind == "impl":
            kid_nodes, kid_ids = [], []
            for cgid, cprops in alt.child_reqs:
                n, ids = self.extract(cgid, cprops)
                kid_nodes.append(n)
                kid_ids.append(ids)
            node, out_ids = materialize(alt.expr, kid_nodes, kid_ids)
            ann = ir.PhysicalAnnotation(op=alt.phys_op, engine=props.engine,
                                        build_side=alt.build_side)
            return node.with_annotation(ann), tuple(out_ids)

        (cgid, cprops), = alt.child_reqs
        inner, ids = self.extract(cgid, cprops)
        if alt.phys_op == "sort_exec":
            pos = {cid: i for i, cid in enumerate(ids)}
            keys = [ir.SortKey(pos[i], d) for (i, d) in alt.sort_keys]
            node = ir.sort(keys, inner).with_annotation(
                ir.PhysicalAnnotation(op="sort_exec", engine=props.engine,
                                      enforcer=True))
            return node, tuple(ids)
        identity = ir.project([ir.col(i) for i in range(len(ids))], inner)
        if alt.phys_op == "engine_bridge":
            ann = ir.PhysicalAnnotation(op="engine_bridge", engine=props.engine,
                                        from_engine=alt.bridge_from,
                                        to_engine=props.engine, enforcer=True)
        else:
            pos = {cid: i for i, cid in enumerate(ids)}
            hash_ordinals = tuple(pos[i] for i in alt.hash_ids) \
                if alt.hash_ids else None
            ann = ir.PhysicalAnnotation(op=alt.phys_op, engine=props.engine,
                                        hash_ordinals=hash_ordinals,
                                        enforcer=True)
        return identity.with_annotation(ann), tuple(ids)
