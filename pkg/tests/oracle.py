"""Independent exhaustive oracle over binary join trees.

Dynamic programming over relation subsets: enumerates every unordered
binary tree (cross products included), costs each join with the same
primitive formulas as the optimizer's cost module, and returns the global
best. No memo, no rules, no enforcer machinery: a structurally different
path to the same answer.
"""

from __future__ import annotations

import itertools
import math



def best_plan_cost(catalog, rels, edges, pset) -> float:
    """Best total cost (scans + joins + root projection) over all binary
    join trees of the relation set."""
    n = len(rels)
    P = pset.get

    def ndv(i, c):
        return catalog.resolve_stats(f"t{i}", f"k{c}").ndv

    rows_cache: dict = {}

    def subset_rows(S) -> float:
        if S in rows_cache:
            return rows_cache[S]
        r = 1.0
        for i in S:
            r *= rels[i][1]
        for (a, b, ca, cb) in edges:
            if a in S and b in S:
                r *= 1.0 / max(ndv(a, ca), ndv(b, cb))
        rows_cache[S] = max(1.0, r)
        return rows_cache[S]

    def scan_cost(i) -> float:
        r = rels[i][1]
        width = 24  # three i64 columns
        pages = math.ceil(r * width / 8192) if r else 0
        return (r * P("cpu_tuple") * P("scan_tuple_factor")
                + pages * P("io_seq_page") * P("scan_page_factor")
                + P("scan_fixed"))

    def sort_cost(r) -> float:
        return (r * math.log2(max(r, 2.0)) * P("cpu_compare")
                * P("sort_spill_factor") * P("sort_compare_factor")
                + r * P("mem_sort_entry") + r * P("sort_tuple")
                + P("sort_fixed"))

    def join_cost(r1, r2, out, has_equi) -> float:
        cands = []
        if has_equi:
            for build, probe in ((r1, r2), (r2, r1)):
                cands.append(build * P("cpu_hash_build") * P("hash_build_factor")
                             + probe * P("cpu_hash_probe") * P("hash_probe_factor")
                             + out * P("cpu_tuple") * P("hash_output_factor")
                             + build * P("mem_hash_entry") * P("hash_mem_factor")
                             + P("join_fixed"))
            cands.append(sort_cost(r1) + sort_cost(r2)
                         + (r1 + r2) * P("cpu_compare") * P("smj_compare_factor")
                         + out * P("cpu_tuple") * P("smj_output_factor")
                         + P("join_fixed"))
        cands.append(r1 * r2 * P("cpu_pred") * P("nlj_pair_factor")
                     + out * P("cpu_tuple") * P("nlj_output_factor")
                     + P("join_fixed"))
        return min(cands)

    memo: dict = {}

    def best(S) -> float:
        if S in memo:
            return memo[S]
        if len(S) == 1:
            memo[S] = scan_cost(next(iter(S)))
            return memo[S]
        out_rows = subset_rows(S)
        best_cost = math.inf
        items = sorted(S)
        for k in range(1, len(items)):
            for combo in itertools.combinations(items, k):
                S1 = frozenset(combo)
                S2 = S - S1
                if min(S2) < min(S1):
                    continue  # unordered pairs once
                r1, r2 = subset_rows(S1), subset_rows(S2)
                has_equi = any((a in S1 and b in S2) or (a in S2 and b in S1)
                               for (a, b, _, _) in edges)
                c = best(S1) + best(S2) + join_cost(r1, r2, out_rows, has_equi)
                best_cost = min(best_cost, c)
        memo[S] = best_cost
        return best_cost

    full = frozenset(range(n))
    total = best(full)
    # full-width root projection: identical for every join order
    total += (subset_rows(full) * P("cpu_expr") * (3 * n)
              * P("project_expr_factor") + P("project_fixed"))
    return total
