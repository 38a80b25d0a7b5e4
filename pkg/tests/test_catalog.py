import json

import pytest

from qoaas import ir
from qoaas.catalog import (Catalog, ColumnStats, TableMeta, load_catalog)
from qoaas.errors import (DataSchemaMismatch, DuplicateTable, UnknownColumn,
                          UnknownEngine, UnknownTable)


def test_register_and_resolve(nation_catalog):
    meta = nation_catalog.table("nation")
    assert meta.row_count == 25
    st = nation_catalog.resolve_stats("nation", "n_key")
    assert st.ndv == 25 and not st.defaulted


def test_duplicate_table(nation_catalog):
    with pytest.raises(DuplicateTable):
        nation_catalog.register_table(
            TableMeta("nation", [("x", ir.i64())], row_count=1))


def test_csv_schema_mismatch(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    cat = Catalog()
    with pytest.raises(DataSchemaMismatch):
        cat.register_table(TableMeta(
            "bad", [(c, ir.i64()) for c in "abcd"], data_path=str(p)))


def test_csv_loading_reconciles_row_count(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("a,b\n1,2\n3,4\n5,6\n")
    cat = Catalog()
    cat.register_table(TableMeta("t", [("a", ir.i64()), ("b", ir.i64())],
                                 row_count=99, data_path=str(p)))
    assert cat.table("t").row_count == 3
    assert cat.data("t")[1] == (3, 4)


def test_default_stats_rule():
    cat = Catalog()
    cat.register_table(TableMeta("t", [("a", ir.i64())], row_count=1000))
    st = cat.resolve_stats("t", "a")
    assert st.ndv == 100 and st.defaulted
    assert st.null_fraction == 0.0 and st.min is None


def test_unknown_lookups(nation_catalog):
    with pytest.raises(UnknownTable):
        nation_catalog.table("nope")
    with pytest.raises(UnknownColumn):
        nation_catalog.resolve_stats("nation", "nope")
    with pytest.raises(UnknownEngine):
        nation_catalog.engine("duckdb")


@pytest.mark.parametrize("engine,item,want", [
    ("colstar", "nested_loop_join", True),
    ("shardrun", "nested_loop_join", False),
    ("shardrun", "shuffle_exchange", True),
    ("colstar", "shuffle_exchange", False),
    ("shardrun", "stream_aggregate", False),
    ("colstar", "stream_aggregate", True),
])
def test_engine_supports_defaults(nation_catalog, engine, item, want):
    assert nation_catalog.engine_supports(engine, item) is want


def test_engine_supports_rules(nation_catalog):
    # default profiles support every rule
    assert nation_catalog.engine_supports("colstar", "join-associate")


def test_profile_invariants():
    with pytest.raises(ValueError):
        # singleton engine must have one partition
        from qoaas.catalog import EngineProfile
        EngineProfile("x", frozenset({"table_scan"}), frozenset({"singleton"}),
                      partition_count=4)


def test_stats_invariants():
    with pytest.raises(ValueError):
        ColumnStats(ndv=0)
    with pytest.raises(ValueError):
        ColumnStats(ndv=1, null_fraction=1.5)
    with pytest.raises(ValueError):
        ColumnStats(ndv=1, min=5, max=2)


def test_bootstrap_file(tmp_path):
    (tmp_path / "n.csv").write_text("a,b\n1,x\n2,y\n")
    doc = {
        "tables": [{
            "name": "n",
            "columns": [{"name": "a", "type": {"kind": "i64"}},
                        {"name": "b", "type": {"kind": "varchar", "length": 4}}],
            "data_path": "n.csv",
            "stats": {"a": {"ndv": 2, "min": 1, "max": 2}},
        }],
    }
    path = tmp_path / "catalog.json"
    path.write_text(json.dumps(doc))
    cat = load_catalog(path, true_weights={"colstar": {"io_seq_page": 40.0}})
    assert cat.table("n").row_count == 2
    assert cat.resolve_stats("n", "a").ndv == 2
    assert cat.engines() == ["colstar", "shardrun"]   # defaults applied
    assert cat.engine("colstar")._true_weights["io_seq_page"] == 40.0
