import json
import re
import subprocess
import sys
import time

import pytest
import requests

# the primary package is used by tests only for setup and cross-validation;
# the client under test talks to the service purely over HTTP
from qoaas.demo import build_demo_workspace


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    out = tmp_path_factory.mktemp("remote-demo")
    build_demo_workspace(out, seed=7)
    return out


@pytest.fixture(scope="session")
def service(workspace, tmp_path_factory):
    """A real out-of-process optimizer service over the demo catalog."""
    data_dir = tmp_path_factory.mktemp("remote-stores")
    proc = subprocess.Popen(
        [sys.executable, "-m", "qoaas.cli", "serve",
         "--catalog", str(workspace / "catalog.json"),
         "--data-dir", str(data_dir),
         "--port", "0"],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    line = proc.stdout.readline()
    m = re.search(r"http://[\d.]+:(\d+)", line)
    assert m, f"service did not start: {line!r}"
    base = f"http://127.0.0.1:{m.group(1)}"
    for _ in range(50):
        try:
            requests.get(f"{base}/v1/health", timeout=1)
            break
        except requests.RequestException:
            time.sleep(0.1)
    yield base, data_dir, workspace
    proc.terminate()
    proc.wait(timeout=10)


@pytest.fixture(scope="session")
def seeded_service(service):
    """Service with the join workload optimized once, so the insight store
    has templates for workload selection."""
    base, data_dir, workspace = service
    plans = sorted((workspace / "workload-joins").glob("*.plan.json"))
    for p in plans:
        body = {"plan": json.loads(p.read_text()),
                "target_engines": ["colstar"], "mode": "v1"}
        r = requests.post(f"{base}/v1/optimize", json=body, timeout=60)
        assert r.status_code == 200, r.text
    return base, data_dir, workspace
