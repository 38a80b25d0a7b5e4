import pytest

from qoaas.errors import SchemaViolation, UnknownKey
from qoaas.stores import ConfigStore, InsightStore, Stores


def rec(qid="q1", engine="colstar", **kw):
    out = {"query_id": qid, "engine": engine}
    out.update(kw)
    return out


def test_append_assigns_monotone_ids(tmp_path):
    store = InsightStore(tmp_path)
    assert store.append(rec()) == 1
    assert store.append(rec("q2")) == 2
    records, _ = store.query(limit=None)
    assert [r["record_id"] for r in records] == [1, 2]


def test_malformed_record_rejected(tmp_path):
    store = InsightStore(tmp_path)
    with pytest.raises(SchemaViolation):
        store.append({"engine": "colstar"})   # missing query_id
    with pytest.raises(SchemaViolation):
        store.append(rec(per_node=[{"est_rows": -1}]))
    assert store.last_id == 0


def test_engine_filter(tmp_path):
    store = InsightStore(tmp_path)
    for i in range(5):
        store.append(rec(f"q{i}", engine="colstar" if i % 2 else "shardrun"))
    records, _ = store.query(engine="colstar", limit=None)
    assert all(r["engine"] == "colstar" for r in records)
    assert len(records) == 2


def test_cursor_pagination_exact_cover(tmp_path):
    store = InsightStore(tmp_path)
    for i in range(5):
        store.append(rec(f"q{i}"))
    seen = []
    cursor = 0
    pages = []
    while True:
        page, cursor2 = store.query(since_id=cursor, limit=2)
        if not page:
            assert cursor2 == cursor
            break
        pages.append(len(page))
        seen.extend(r["record_id"] for r in page)
        cursor = cursor2
    assert pages == [2, 2, 1]
    assert seen == [1, 2, 3, 4, 5]


def test_since_last_id_empty_page(tmp_path):
    store = InsightStore(tmp_path)
    store.append(rec())
    page, cursor = store.query(since_id=store.last_id)
    assert page == [] and cursor == store.last_id


def test_crash_recovery_including_torn_tail(tmp_path):
    store = InsightStore(tmp_path)
    for i in range(4):
        store.append(rec(f"q{i}"))
    before, _ = store.query(limit=None)
    store.close()
    # simulate a crash mid-append: torn trailing line
    with (tmp_path / "insights.jsonl").open("a") as f:
        f.write('{"query_id": "torn", "eng')
    reopened = InsightStore(tmp_path)
    after, _ = reopened.query(limit=None)
    assert after == before
    # appends continue with the right id
    assert reopened.append(rec("q5")) == 5


def test_config_versions_per_scope_key(tmp_path):
    store = ConfigStore(tmp_path)
    scope = {"kind": "engine", "id": "colstar"}
    assert store.put(scope, "cost-params", {"cpu_tuple": 2.0}) == 1
    assert store.put(scope, "cost-params", {"cpu_tuple": 3.0}) == 2
    assert store.put({"kind": "global"}, "cost-params", {"cpu_tuple": 1.5}) == 1


def test_config_bounds_validation(tmp_path):
    store = ConfigStore(tmp_path)
    with pytest.raises(SchemaViolation):
        store.put({"kind": "global"}, "cost-params", {"cpu_tuple": -4.0})
    with pytest.raises(UnknownKey):
        store.put({"kind": "global"}, "no-such-key", {})


def test_resolution_precedence(tmp_path):
    store = ConfigStore(tmp_path)
    store.put({"kind": "global"}, "cost-params", {"cpu_tuple": 1.0})
    store.put({"kind": "engine", "id": "colstar"}, "cost-params",
              {"cpu_tuple": 2.0})
    value, scope = store.resolve("cost-params", {"engine": "colstar"})
    assert value["cpu_tuple"] == 2.0 and scope == "engine"
    value, scope = store.resolve("cost-params", {"engine": "shardrun"})
    assert value["cpu_tuple"] == 1.0 and scope == "global"
    store.put({"kind": "query-template", "digest": "d1"}, "cost-params",
              {"cpu_tuple": 5.0})
    value, scope = store.resolve("cost-params",
                                 {"engine": "colstar", "query_template": "d1"})
    assert value["cpu_tuple"] == 5.0 and scope == "query-template"


def test_resolution_default(tmp_path):
    store = ConfigStore(tmp_path)
    value, scope = store.resolve("cost-params", {"engine": "colstar"})
    assert scope == "default"
    assert value["cpu_tuple"] == 1.0
    with pytest.raises(UnknownKey):
        store.resolve("mystery", {})


def test_template_scoped_overrides(tmp_path):
    store = ConfigStore(tmp_path)
    store.put({"kind": "query-template", "digest": "D"}, "card-overrides",
              {"f" * 64: 10})
    value, scope = store.resolve("card-overrides", {"query_template": "D"})
    assert scope == "query-template" and value == {"f" * 64: 10}
    value, scope = store.resolve("card-overrides", {"query_template": "E"})
    assert scope == "default" and value == {}


def test_snapshot_isolation(tmp_path):
    store = ConfigStore(tmp_path)
    store.put({"kind": "global"}, "cost-params", {"cpu_tuple": 1.0})
    snap = store.snapshot()
    store.put({"kind": "global"}, "cost-params", {"cpu_tuple": 9.0})
    value, _ = snap.resolve("cost-params", {})
    assert value["cpu_tuple"] == 1.0
    value, _ = store.resolve("cost-params", {})
    assert value["cpu_tuple"] == 9.0


def test_config_replay(tmp_path):
    store = ConfigStore(tmp_path)
    store.put({"kind": "global"}, "cost-params", {"cpu_tuple": 2.0})
    store.put({"kind": "engine", "id": "colstar"}, "card-overrides",
              {"a" * 64: 3})
    store.close()
    reopened = ConfigStore(tmp_path)
    value, scope = reopened.resolve("card-overrides", {"engine": "colstar"})
    assert value == {"a" * 64: 3} and scope == "engine"
    assert reopened.current_seq == 2


def test_stores_bundle(tmp_path):
    stores = Stores(tmp_path)
    stores.insights.append(rec())
    stores.config.put({"kind": "global"}, "action", {"note": "hi"})
    assert (tmp_path / "insights.jsonl").exists()
    assert (tmp_path / "config.jsonl").exists()
    stores.close()


def test_concurrent_appends_distinct_consecutive_ids(tmp_path):
    import threading
    store = InsightStore(tmp_path)
    got = []

    def worker(n):
        for i in range(20):
            got.append(store.append(rec(f"w{n}-{i}")))
    threads = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(got) == list(range(1, 81))
    records, _ = store.query(limit=None)
    assert [r["record_id"] for r in records] == list(range(1, 81))


def test_time_range_filter(tmp_path):
    store = InsightStore(tmp_path)
    store.append(dict(rec("old"), timestamp=100.0))
    store.append(dict(rec("new"), timestamp=200.0))
    records, _ = store.query(time_range=(150.0, 250.0), limit=None)
    assert [r["query_id"] for r in records] == ["new"]
