"""Figure rendering for tuning runs and insight summaries.

Figures land next to the delimited/JSON outputs they illustrate; the Agg
backend keeps everything headless.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def convergence_figure(run, path) -> Path:
    path = Path(path)
    objectives = [o for (_, o) in run.history]
    best = []
    cur = math.inf
    for o in objectives:
        cur = min(cur, o)
        best.append(cur)
    fig, ax = plt.subplots(figsize=(7, 4.2))
    finite = [(i, o) for i, o in enumerate(objectives) if math.isfinite(o)]
    if finite:
        ax.plot([i for i, _ in finite], [o for _, o in finite], ".",
                color="#999999", markersize=4, label="trial objective")
    ax.plot(range(len(best)), best, color="#d62728", lw=1.8,
            label="best so far")
    ax.axhline(run.baseline_objective, color="#1f77b4", ls="--", lw=1.2,
               label="defaults")
    ax.set_xlabel("trial")
    ax.set_ylabel("workload runtime-units")
    ax.set_title(f"{run.engine} {run.strategy} seed={run.seed} "
                 f"improvement={100 * run.improvement:.1f}%")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def engine_totals_figure(totals: dict, path) -> Path:
    """Bar chart of total runtime-units per engine."""
    path = Path(path)
    engines = sorted(totals)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    ax.bar(engines, [totals[e] for e in engines], color="#1f77b4", width=0.5)
    ax.set_ylabel("total runtime-units")
    ax.set_title("executed work per engine")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def est_vs_actual_figure(pairs: list, path) -> Path:
    """Scatter of estimated vs actual rows over fed-back fragments."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    xs = [max(e, 0.5) for (e, _) in pairs]
    ys = [max(a, 0.5) for (_, a) in pairs]
    if xs:
        lim = max(max(xs), max(ys)) * 1.5
        ax.plot([0.5, lim], [0.5, lim], color="#999999", lw=1, ls="--")
        ax.scatter(xs, ys, s=14, alpha=0.6, color="#d62728")
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("estimated rows")
    ax.set_ylabel("actual rows")
    ax.set_title("cardinality estimates vs actuals")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def template_frequency_figure(counts: dict, path, top: int = 12) -> Path:
    path = Path(path)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    labels = [t[:8] for (t, _) in ranked]
    ax.bar(labels, [c for (_, c) in ranked], color="#2ca02c", width=0.6)
    ax.set_ylabel("queries")
    ax.set_title("most frequent query templates")
    ax.tick_params(axis="x", rotation=45, labelsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
