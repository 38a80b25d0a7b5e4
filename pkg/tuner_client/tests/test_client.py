import time

import pytest

from tuner_client.client import ServiceClient, ServiceError, ServiceUnavailable
from tuner_client.registry import Projection, load_registry


def test_registry_has_sixty_bounded_entries():
    reg = load_registry()
    assert len(reg) == 60
    for spec in reg:
        assert spec["lo"] <= spec["default"] <= spec["hi"]


def test_registry_matches_service_defaults(service):
    base, _, _ = service
    client = ServiceClient(base)
    resolved = client.resolve_config("cost-params", engine="colstar")
    assert resolved["scope"] in ("default", "engine")
    if resolved["scope"] == "default":
        published = {s["name"]: s["default"] for s in load_registry()}
        assert resolved["value"] == published


def test_projection_stays_in_bounds():
    import numpy as np
    proj = Projection(5)
    rng = np.random.default_rng(1)
    reg = {s["name"]: s for s in load_registry()}
    for _ in range(2000):
        values = proj.map(rng.uniform(-1, 1, 10))
        for name, v in values.items():
            assert reg[name]["lo"] <= v <= reg[name]["hi"]


def test_retry_then_abort_when_service_down():
    client = ServiceClient("http://127.0.0.1:1", attempts=3, backoff_s=0.01,
                           timeout_s=0.2)
    started = time.perf_counter()
    with pytest.raises(ServiceUnavailable):
        client.health()
    # exponential backoff actually waited between the three attempts
    assert time.perf_counter() - started >= 0.01 + 0.02


def test_http_errors_are_not_retried(service):
    base, _, _ = service
    client = ServiceClient(base)
    with pytest.raises(ServiceError) as exc:
        client.optimize({"version": "qoaas-ir/1", "query_id": "x",
                         "extensions": [],
                         "root": {"op": "read", "table": "ghost",
                                  "children": []}},
                        ["colstar"])
    assert exc.value.status == 400


def test_cli_exits_nonzero_when_unreachable(tmp_path):
    from tuner_client.cli import main
    code = main(["--endpoint", "http://127.0.0.1:1", "--engine", "colstar",
                 "--budget", "1", "--out", str(tmp_path)])
    assert code == 1


def test_cli_settings_from_toml(tmp_path):
    cfg = tmp_path / "tuner.toml"
    cfg.write_text('endpoint = "http://example:9"\nbudget = 9\n'
                   'strategy = "simple-surrogate"\n')
    from tuner_client.cli import load_settings
    settings = load_settings(["--config", str(cfg), "--seed", "3"])
    assert settings["endpoint"] == "http://example:9"
    assert settings["budget"] == 9
    assert settings["strategy"] == "simple-surrogate"
    assert settings["seed"] == 3          # flag overrides file
    assert settings["engine"] == "colstar"   # default preserved
