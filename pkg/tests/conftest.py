import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qoaas import ir
from qoaas.catalog import Catalog, ColumnStats, TableMeta
from qoaas.demo import build_demo_workspace, load_demo_catalog


@pytest.fixture
def nation_catalog():
    """Tiny fixed catalog with loaded data for exact-value tests."""
    cat = Catalog()
    cat.register_default_engines()
    rows = [(i, f"n{i:02d}", i % 5, i * 10) for i in range(1, 26)]
    cat.register_table(
        TableMeta("nation", [("n_key", ir.i64()), ("n_name", ir.varchar(8)),
                             ("n_region", ir.i64()), ("n_pop", ir.i64())],
                  row_count=25),
        {"n_key": ColumnStats(ndv=25, min=1, max=25),
         "n_region": ColumnStats(ndv=5, min=0, max=4),
         "n_pop": ColumnStats(ndv=25, min=10, max=250)},
        rows=rows)
    region_rows = [(i, f"r{i}") for i in range(5)]
    cat.register_table(
        TableMeta("region", [("r_key", ir.i64()), ("r_name", ir.varchar(8))],
                  row_count=5),
        {"r_key": ColumnStats(ndv=5, min=0, max=4)},
        rows=region_rows)
    return cat


@pytest.fixture
def rng():
    return random.Random(20240901)


@pytest.fixture(scope="session")
def demo_workspace(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    build_demo_workspace(out, seed=7)
    return out


@pytest.fixture(scope="session")
def demo_catalog(demo_workspace):
    return load_demo_catalog(demo_workspace)
