import math

import numpy as np
import pytest

from qoaas import params, tuner
from qoaas.demo import join_workload
from qoaas.errors import EmptyWorkload, NoMatchingInsights
from qoaas.stores import Stores


def test_projection_reproducible_from_seed():
    a, b = tuner.Projection(11), tuner.Projection(11)
    assert np.array_equal(a.matrix, b.matrix)
    c = tuner.Projection(12)
    assert not np.array_equal(a.matrix, c.matrix)


def test_projection_dimensions():
    p = tuner.Projection(1)
    assert p.matrix.shape == (60, 10)


def test_projection_respects_bounds():
    proj = tuner.Projection(3)
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        z = rng.uniform(-1, 1, 10)
        pset = proj.map(z)
        for spec in params.PARAM_REGISTRY:
            v = pset.get(spec.name)
            assert spec.lo <= v <= spec.hi, spec.name


def test_empty_workload_objective_is_zero(demo_catalog):
    assert tuner.evaluate_params(params.defaults(), [], "colstar",
                                 demo_catalog) == 0.0


def test_tune_requires_workload(demo_catalog):
    with pytest.raises(EmptyWorkload):
        tuner.tune("colstar", [], 5, "random", 1, demo_catalog)
    with pytest.raises(ValueError):
        tuner.tune("colstar", join_workload(), 0, "random", 1, demo_catalog)


def test_budget_one_returns_single_sample(demo_catalog):
    run = tuner.tune("colstar", join_workload()[:2], budget=1,
                     strategy="random", seed=5, catalog=demo_catalog)
    assert len(run.history) == 1
    assert run.best_objective == run.history[0][1]
    assert run.best_params is not None


def test_same_seed_identical_history(demo_catalog):
    w = join_workload()[:3]
    a = tuner.tune("colstar", w, budget=8, strategy="random", seed=7,
                   catalog=demo_catalog)
    b = tuner.tune("colstar", w, budget=8, strategy="random", seed=7,
                   catalog=demo_catalog)
    assert a.history == b.history


def test_best_so_far_non_increasing(demo_catalog):
    run = tuner.tune("colstar", join_workload()[:3], budget=12,
                     strategy="random", seed=3, catalog=demo_catalog)
    best = math.inf
    for (_, obj) in run.history:
        best = min(best, obj)
        assert run.best_objective <= best or math.isclose(
            run.best_objective, best)
    assert run.best_objective == best


def test_true_weights_beat_defaults(demo_catalog):
    from qoaas.engines import true_params_for
    w = join_workload()
    base = tuner.evaluate_params(params.defaults(), w, "colstar", demo_catalog)
    cheat = tuner.evaluate_params(true_params_for(demo_catalog, "colstar"),
                                  w, "colstar", demo_catalog)
    assert cheat <= base


def test_tune_writes_config_and_logs_trials(demo_catalog, tmp_path):
    stores = Stores(tmp_path)
    run = tuner.tune("colstar", join_workload()[:3], budget=4,
                     strategy="random", seed=2, catalog=demo_catalog,
                     config_store=stores.config, insights=stores.insights)
    value, scope = stores.config.resolve("cost-params", {"engine": "colstar"})
    assert scope == "engine"
    assert value == run.best_params.to_json()
    entry = stores.config.snapshot().get(("engine", "colstar"), "cost-params")
    assert entry["author"] == run.run_id
    records, _ = stores.insights.query(limit=None)
    tagged = [r for r in records if r.get("optimizer_variant") == run.run_id]
    assert len(tagged) == 5   # baseline + 4 trials


def test_coordinate_strategy_runs(demo_catalog):
    run = tuner.tune("colstar", join_workload()[:3], budget=10,
                     strategy="coordinate", seed=4, catalog=demo_catalog)
    assert len(run.history) == 10
    assert run.best_objective <= run.history[0][1]


def test_report_roundtrip(demo_catalog, tmp_path):
    run = tuner.tune("colstar", join_workload()[:2], budget=3,
                     strategy="random", seed=1, catalog=demo_catalog)
    path = tuner.write_report(run, tmp_path)
    doc = tuner.load_run_report(path)
    assert doc["run_id"] == run.run_id
    assert len(doc["history"]) == 3
    assert (tmp_path / f"run-{run.run_id}-convergence.png").exists()


def test_select_workload_frequency_order(demo_catalog, tmp_path):
    stores = Stores(tmp_path)
    docs = join_workload()
    from qoaas import ir
    t1 = ir.template_digest(docs[0], demo_catalog)
    t2 = ir.template_digest(docs[1], demo_catalog)
    for i, (t, doc, n) in enumerate([(t1, docs[0], 5), (t2, docs[1], 3)]):
        for k in range(n):
            stores.insights.append({
                "query_id": f"s{i}-{k}", "engine": "colstar",
                "template_digest": t, "unoptimized_plan": doc.to_json()})
    picked = tuner.select_workload(stores.insights, {"engine": "colstar"}, 1)
    assert len(picked) == 1
    assert ir.template_digest(picked[0], demo_catalog) == t1
    both = tuner.select_workload(stores.insights, {"engine": "colstar"}, 10)
    assert len(both) == 2
    with pytest.raises(NoMatchingInsights):
        tuner.select_workload(stores.insights, {"engine": "shardrun"}, 1)
