"""Offline cost-parameter tuning against the toy-engine runtimes.

A trial proposes a parameter vector, optimizes every workload plan under
it, executes the results, and scores the total runtime-units. Search runs
in a 10-dimensional space mapped into the 60 parameters through a seeded
Gaussian random projection in log space, so parameters spanning magnitudes
stay positive and inside their registry bounds.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import ir, params, postopt
from .cardinality import CardinalityOverrides
from .engines import execute
from .errors import EmptyWorkload, NoMatchingInsights
from .explorer import OptimizeRequest, optimize
from .simplify import simplify

PROJECTION_INPUT_DIMS = 60
PROJECTION_SEARCH_DIMS = 10


class Projection:
    """z in [-1,1]^10 -> ParamSet via p = clamp(lo, hi, default * exp(Az))."""

    def __init__(self, seed: int, d: int = PROJECTION_SEARCH_DIMS):
        self.seed = seed
        self.d = d
        rng = np.random.default_rng(seed)
        self.matrix = rng.standard_normal((PROJECTION_INPUT_DIMS, d))

    def map(self, z) -> params.ParamSet:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.d,):
            raise ValueError(f"z must have shape ({self.d},)")
        z = np.clip(z, -1.0, 1.0)
        log_scale = self.matrix @ z
        values = {}
        for spec, s in zip(params.PARAM_REGISTRY, log_scale):
            v = spec.default * math.exp(float(s))
            values[spec.name] = min(spec.hi, max(spec.lo, v))
        return params.ParamSet(values, provenance="projected")


def evaluate_params(param_set: params.ParamSet, workload: list, engine: str,
                    catalog, insights=None, run_id: Optional[str] = None,
                    trial: Optional[int] = None,
                    overrides: Optional[CardinalityOverrides] = None) -> float:
    """Total runtime-units of the workload optimized under ``param_set``
    and executed on the engine; +inf when any plan fails."""
    total = 0.0
    try:
        for doc in workload:
            simplified = simplify(doc, catalog, target_engines=[engine])
            plan = optimize(OptimizeRequest(doc=simplified,
                                            target_engines=[engine],
                                            mode="full", params=param_set,
                                            overrides=overrides), catalog)
            segments = postopt.emit(plan, "full", catalog)
            result = execute(segments, catalog)
            total += result.metrics.total_runtime_units
    except Exception:
        total = math.inf
    if insights is not None and run_id is not None:
        insights.append({
            "query_id": f"tune/{run_id}/trial{trial}",
            "engine": engine, "mode": "tune", "optimizer_variant": run_id,
            "params_digest": param_set.digest(),
            "total_runtime_units": total if math.isfinite(total) else -0.0,
            "tuning_trial": trial,
        })
    return total


@dataclass
class TuningRun:
    run_id: str
    engine: str
    strategy: str
    seed: int
    budget: int
    baseline_objective: float
    history: list = field(default_factory=list)  # (params_digest, objective)
    best_objective: float = math.inf
    best_params: Optional[params.ParamSet] = None
    best_trial: int = -1
    wall_time_s: float = 0.0

    @property
    def improvement(self) -> float:
        """Fractional reduction of the objective vs registry defaults."""
        if not math.isfinite(self.best_objective) or self.baseline_objective <= 0:
            return 0.0
        return 1.0 - self.best_objective / self.baseline_objective

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id, "engine": self.engine,
            "strategy": self.strategy, "seed": self.seed,
            "budget": self.budget,
            "baseline_objective": self.baseline_objective,
            "best_objective": self.best_objective,
            "best_trial": self.best_trial,
            "improvement_pct": round(100.0 * self.improvement, 3),
            "wall_time_s": round(self.wall_time_s, 3),
            "best_params": self.best_params.to_json() if self.best_params else None,
            "history": [{"trial": i, "params_digest": d, "objective": o}
                        for i, (d, o) in enumerate(self.history)],
        }


def load_run_report(path) -> dict:
    """Parse and shape-check a tuning report (also used to cross-validate
    reports produced by external tuner clients)."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    for key in ("run_id", "engine", "strategy", "seed", "budget",
                "baseline_objective", "best_objective", "improvement_pct",
                "history", "best_params"):
        if key not in doc:
            raise ValueError(f"tuning report missing {key!r}")
    for entry in doc["history"]:
        for key in ("trial", "params_digest", "objective"):
            if key not in entry:
                raise ValueError(f"history entry missing {key!r}")
    return doc


def tune(engine: str, workload: list, budget: int, strategy: str, seed: int,
         catalog, config_store=None, insights=None,
         overrides: Optional[CardinalityOverrides] = None) -> TuningRun:
    """Minimize workload runtime-units over the projected parameter space.

    The best parameter set lands in the config store under the engine
    scope so subsequent optimizer sessions pick it up.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if not workload:
        raise EmptyWorkload("tuning needs at least one workload plan")
    run_id = f"{engine}-{strategy}-s{seed}-b{budget}"
    if config_store is not None:
        config_store.put({"kind": "global"}, f"tuning-lock/{engine}",
                         {"run_id": run_id}, author=run_id)
    started = time.perf_counter()
    projection = Projection(seed)
    rng = np.random.default_rng(seed + 1)

    def score(param_set, trial):
        return evaluate_params(param_set, workload, engine, catalog,
                               insights=insights, run_id=run_id, trial=trial,
                               overrides=overrides)

    baseline = score(params.defaults(), trial=-1)
    run = TuningRun(run_id=run_id, engine=engine, strategy=strategy,
                    seed=seed, budget=budget, baseline_objective=baseline)

    def consider(z, trial):
        pset = projection.map(z)
        obj = score(pset, trial)
        run.history.append((pset.digest(), obj))
        if obj < run.best_objective:
            run.best_objective = obj
            run.best_params = pset.replace(provenance=f"tuned({run_id})")
            run.best_trial = trial
        return obj

    if strategy == "random":
        for trial in range(budget):
            consider(rng.uniform(-1.0, 1.0, projection.d), trial)
    elif strategy == "coordinate":
        z = np.zeros(projection.d)
        best = consider(z, 0)
        step = 0.5
        trial = 1
        while trial < budget and step > 1e-3:
            improved = False
            for dim in range(projection.d):
                if trial >= budget:
                    break
                for sign in (1.0, -1.0):
                    if trial >= budget:
                        break
                    cand = z.copy()
                    cand[dim] = float(np.clip(cand[dim] + sign * step, -1, 1))
                    obj = consider(cand, trial)
                    trial += 1
                    if obj < best:
                        best, z = obj, cand
                        improved = True
                        break
            if not improved:
                step *= 0.5
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    run.wall_time_s = time.perf_counter() - started
    if config_store is not None and run.best_params is not None:
        config_store.put({"kind": "engine", "id": engine}, "cost-params",
                         run.best_params.to_json(), author=run_id)
    return run


def select_workload(insights, insight_filter: dict, k: int,
                    catalog=None) -> list:
    """The k most frequent query templates, one representative plan each."""
    records, _ = insights.query(limit=None, **insight_filter)
    records = [r for r in records if r.get("template_digest")
               and r.get("unoptimized_plan")]
    if not records:
        raise NoMatchingInsights(f"no usable insights for {insight_filter}")
    counts: dict = {}
    first: dict = {}
    for r in records:
        t = r["template_digest"]
        counts[t] = counts.get(t, 0) + 1
        first.setdefault(t, r)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))[:k]
    return [ir.PlanDocument.from_json(first[t]["unoptimized_plan"])
            for t in ranked]


def write_report(run: TuningRun, out_dir, make_figure: bool = True) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"run-{run.run_id}.json"
    with path.open("w", encoding="utf-8") as f:
        json.dump(run.to_json(), f, indent=2, sort_keys=True)
    if make_figure:
        from .report import convergence_figure
        convergence_figure(run, out_dir / f"run-{run.run_id}-convergence.png")
    return path
