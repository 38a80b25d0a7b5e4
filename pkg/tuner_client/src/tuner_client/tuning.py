"""The remote tuning loop.

Workload selection pulls the insight log and keeps the most frequent query
templates. Each trial publishes a candidate parameter set under the
trial-only config key, re-optimizes every workload plan with the trial
variant (so concurrent production traffic keeps its own parameters), runs
the emitted plans on the service's execution endpoint, and scores total
runtime-units. The winning parameters are written back as the engine's
cost parameters.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .client import ServiceClient, ServiceError
from .registry import SEARCH_DIMS, Projection

TRIAL_KEY = "cost-params-trial"
FINAL_KEY = "cost-params"


def select_workload(client: ServiceClient, engine: str, k: int = 8) -> list:
    """Representative plan per template, most frequent templates first."""
    records = []
    cursor = 0
    while True:
        page = client.insights(engine=engine, since_id=cursor, limit=200)
        records.extend(page["records"])
        if not page["records"] or page["next_cursor"] == cursor:
            break
        cursor = page["next_cursor"]
    counts: dict = {}
    first: dict = {}
    for r in records:
        t = r.get("template_digest")
        if not t or not r.get("unoptimized_plan"):
            continue
        counts[t] = counts.get(t, 0) + 1
        first.setdefault(t, r["unoptimized_plan"])
    if not counts:
        raise RuntimeError(f"no usable insights for engine {engine!r}")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))[:k]
    return [first[t] for t in ranked]


@dataclass
class RemoteRun:
    run_id: str
    engine: str
    strategy: str
    seed: int
    budget: int
    baseline_objective: float = math.inf
    history: list = field(default_factory=list)   # (digest, objective, z)
    best_objective: float = math.inf
    best_params: dict | None = None
    best_trial: int = -1
    wall_time_s: float = 0.0
    failures: int = 0

    @property
    def improvement(self) -> float:
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
            "failures": self.failures,
            "best_params": self.best_params,
            "history": [{"trial": i, "params_digest": d, "objective": o}
                        for i, (d, o, _) in enumerate(self.history)],
        }


def _params_digest(values: dict) -> str:
    import hashlib
    blob = json.dumps(values, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _objective(client: ServiceClient, engine: str, workload: list,
               variant: str) -> float:
    total = 0.0
    for plan in workload:
        optimized = client.optimize(plan, [engine], mode="full",
                                    variant=variant)
        result = client.run(optimized["plans"])
        total += result["metrics"]["total_runtime_units"]
    return total


def run_remote_tuning(endpoint: str, engine: str, budget: int,
                      strategy: str = "random", seed: int = 7,
                      workload_k: int = 8,
                      client: ServiceClient | None = None) -> RemoteRun:
    client = client or ServiceClient(endpoint)
    client.health()   # fail fast (with retries) when the service is down
    run_id = f"remote-{engine}-{strategy}-s{seed}-b{budget}"
    run = RemoteRun(run_id=run_id, engine=engine, strategy=strategy,
                    seed=seed, budget=budget)
    started = time.perf_counter()
    workload = select_workload(client, engine, k=workload_k)
    projection = Projection(seed)
    rng = np.random.default_rng(seed + 1)

    run.baseline_objective = _objective(client, engine, workload, variant="A")

    zs: list = []

    def trial(z, index) -> float:
        values = projection.map(z)
        digest = _params_digest(values)
        try:
            client.put_config({"kind": "engine", "id": engine}, TRIAL_KEY,
                              values, author=f"{run_id}/t{index}")
            obj = _objective(client, engine, workload, variant="trial")
        except ServiceError:
            # a rejected trial still counts against the budget
            run.failures += 1
            obj = math.inf
        run.history.append((digest, obj, [float(v) for v in z]))
        zs.append(np.asarray(z, dtype=float))
        if obj < run.best_objective:
            run.best_objective = obj
            run.best_params = values
            run.best_trial = index
        return obj

    if strategy == "random":
        for i in range(budget):
            trial(rng.uniform(-1, 1, SEARCH_DIMS), i)
    elif strategy == "simple-surrogate":
        warmup = min(budget, max(6, budget // 4))
        for i in range(warmup):
            trial(rng.uniform(-1, 1, SEARCH_DIMS), i)
        for i in range(warmup, budget):
            objs = np.array([o for (_, o, _) in run.history])
            finite = np.isfinite(objs)
            if finite.sum() >= 4 and rng.random() < 0.7:
                X = np.vstack([zs[j] for j in range(len(zs)) if finite[j]])
                y = objs[finite]
                A = np.hstack([X, np.ones((len(X), 1))])
                coef, *_ = np.linalg.lstsq(A, y, rcond=None)
                cands = rng.uniform(-1, 1, (1000, SEARCH_DIMS))
                preds = np.hstack([cands, np.ones((1000, 1))]) @ coef
                z = cands[int(np.argmin(preds))]
            else:
                z = rng.uniform(-1, 1, SEARCH_DIMS)
            trial(z, i)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    if run.best_params is not None:
        client.put_config({"kind": "engine", "id": engine}, FINAL_KEY,
                          run.best_params, author=run_id)
    run.wall_time_s = time.perf_counter() - started
    return run


def write_report(run: RemoteRun, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"remote-run-{run.run_id}.json"
    path.write_text(json.dumps(run.to_json(), indent=2, sort_keys=True),
                    encoding="utf-8")
    return path
