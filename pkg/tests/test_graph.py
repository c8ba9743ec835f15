import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from relsynth.database import IntegrityError, load_database
from relsynth.datasets import _build, _keys, _table, planted_partition
from relsynth.graph import (assemble_database, build_entity_graph, dimension_frames, junction_tables, m2m_invert,
                            m2m_transform, roundtrip_check)

from conftest import ALL_DATASETS


def store_db(parents):
    doc = {"tables": [_table("store", "store_id", [("size", "numerical")]),
                      _table("sales", "sale_id", [("amount", "numerical")], [("store_id", "store", "store_id")])]}
    return _build(doc, {"store": {"store_id": ["A", "B"], "size": [1.0, 2.0]},
                        "sales": {"sale_id": _keys(len(parents)), "amount": np.arange(len(parents), dtype=float),
                                  "store_id": parents}})


def junction_db(pairs, n_a=3, n_b=3, child_of_j=False):
    tables = [_table("a", "a_id", [("x", "numerical")]), _table("b", "b_id", [("y", "categorical")]),
              _table("j", "j_id", [("w", "numerical")], [("a_id", "a", "a_id"), ("b_id", "b", "b_id")])]
    frames = {"a": {"a_id": _keys(n_a, "a"), "x": np.arange(n_a, dtype=float)},
              "b": {"b_id": _keys(n_b, "b"), "y": ["u"] * n_b},
              "j": {"j_id": _keys(len(pairs), "j"), "w": np.arange(len(pairs), dtype=float),
                    "a_id": [f"a{p}" for p, _ in pairs], "b_id": [f"b{q}" for _, q in pairs]}}
    if child_of_j:
        tables.append(_table("k", "k_id", [], [("j_id", "j", "j_id")]))
        frames["k"] = {"k_id": ["k0"], "j_id": ["j0"]}
    return _build({"tables": tables}, frames)


def test_store_example():
    db = store_db(["A"] * 5)
    g = build_entity_graph(db)
    assert g.n_nodes == 7
    rel = g.relations["sales.store_id->store"]
    assert rel.m == 5
    assert rel.degrees(5, 2)[1].tolist() == [5, 0]
    src, dst = rel.inverse()
    assert np.array_equal(src, rel.dst) and np.array_equal(dst, rel.src)


def test_two_fks_give_two_n_edges():
    g = build_entity_graph(junction_db([(0, 0), (1, 2), (2, 2), (0, 1)]))
    fwd = sum(r.m for r in g.relations.values() if r.side0 == "j")
    assert fwd == 2 * 4
    assert g.node_counts["j"] == 4


def test_junction_transform():
    g = build_entity_graph(junction_db([(0, 0), (1, 2), (2, 2), (0, 1)]))
    gt, log = m2m_transform(g)
    assert "j" not in gt.node_counts
    edge = gt.relations["j"]
    assert edge.kind == "m2m" and edge.m == 4
    assert list(zip(edge.src.tolist(), edge.dst.tolist())) == [(0, 0), (1, 2), (2, 2), (0, 1)]
    assert log.tables == ["j"]
    assert m2m_invert(gt, log) == g


def test_two_parents_with_a_child_not_transformed():
    db = junction_db([(0, 0), (1, 1)], child_of_j=True)
    assert junction_tables(db.schema) == []
    g = build_entity_graph(db)
    gt, log = m2m_transform(g)
    assert gt == g and not log.records


@st.composite
def junction_pairs(draw):
    n_a = draw(st.integers(1, 5))
    n_b = draw(st.integers(1, 5))
    pairs = draw(st.lists(st.tuples(st.integers(0, n_a - 1), st.integers(0, n_b - 1)), max_size=12))
    return n_a, n_b, pairs


@given(junction_pairs())
def test_invert_transform_identity(case):
    n_a, n_b, pairs = case
    g = build_entity_graph(junction_db(pairs, n_a, n_b))
    gt, log = m2m_transform(g)
    assert m2m_invert(gt, log) == g


@given(st.lists(st.sampled_from(["A", "B", None]), max_size=15))
def test_degree_sums_and_roundtrip(parents):
    db = store_db(np.array(parents, dtype=object))
    g = build_entity_graph(db)
    for r in g.relations.values():
        d0, d1 = r.degrees(g.node_counts[r.side0], g.node_counts[r.side1])
        assert d0.sum() == d1.sum() == r.m
    ok, detail = roundtrip_check(db)
    assert ok, detail


@pytest.mark.parametrize("name", ALL_DATASETS)
def test_roundtrip_all_datasets(name, dataset_cache):
    ok, detail = roundtrip_check(dataset_cache(name))
    assert ok, detail


def test_roundtrip_planted_partition():
    db, _ = planted_partition()
    assert roundtrip_check(db)[0]


def test_assemble_writes_valid_csv(tmp_path, toy_db):
    g = build_entity_graph(toy_db)
    out = assemble_database(g, dict(g.attributes), toy_db.schema)
    assert out["sales"]["store_id"].isin(out["store"]["store_id"]).all()
    out.write(tmp_path)
    again = load_database(toy_db.schema, tmp_path)
    assert again.row_counts == toy_db.row_counts


def test_assemble_after_rewiring_validates(toy_db):
    g = build_entity_graph(toy_db)
    rel = g.relations["sales.store_id->store"]
    rel.dst = np.random.default_rng(0).permutation(rel.dst)
    out = assemble_database(g, dict(g.attributes), toy_db.schema)
    out.validate()
    counts = out["sales"]["store_id"].value_counts()
    assert counts.sum() == rel.m


def test_assemble_regenerates_junction_rows():
    db = junction_db([(0, 0), (1, 2), (2, 2), (0, 1)])
    g = build_entity_graph(db)
    gt, log = m2m_transform(g)
    gt.relations["j"].dst = gt.relations["j"].dst[::-1].copy()
    back = m2m_invert(gt, log)
    out = assemble_database(back, dict(back.attributes), db.schema)
    assert len(out["j"]) == 4
    assert out["j"]["a_id"].notna().all() and out["j"]["b_id"].notna().all()


def test_assemble_errors(toy_db):
    g = build_entity_graph(toy_db)
    attrs = dict(g.attributes)
    attrs["sales"] = attrs["sales"].iloc[:-1]
    with pytest.raises(IntegrityError, match="missing attribute"):
        assemble_database(g, attrs, toy_db.schema)
    g = build_entity_graph(toy_db)
    rel = g.relations["sales.store_id->store"]
    rel.src = np.zeros_like(rel.src)
    with pytest.raises(IntegrityError, match="forward edges"):
        assemble_database(g, dict(g.attributes), toy_db.schema)


def test_dimension_rows_copied(tiny_db):
    g = build_entity_graph(tiny_db)
    attrs = dict(g.attributes)
    attrs.update(dimension_frames(tiny_db))
    out = assemble_database(g, attrs, tiny_db.schema)
    assert out["color"].equals(tiny_db["color"])
    assert list(out["post"]["color_id"]) == ["c0", "c1", "c1"]
