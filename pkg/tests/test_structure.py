import numpy as np
import pytest

from relsynth.datasets import planted_partition
from relsynth.graph import assemble_database, build_entity_graph, dimension_frames, m2m_transform
from relsynth.metrics import cardinality_similarity
from relsynth.structgen import StructureConfig, infer_partition, run_structure, sbm_graph
from relsynth.structgen.generate import _local_labels
from relsynth.structgen.sampling import BlockEdgeMatrix, is_simple

from conftest import ALL_DATASETS


def assert_structure_preserved(g, res):
    before, _ = m2m_transform(g)
    after, _ = m2m_transform(res.graph)
    sg = sbm_graph(before)
    assert after.node_counts == before.node_counts
    for rel in before.structural():
        new = after.relations[rel.name]
        n0, n1 = before.node_counts[rel.side0], before.node_counts[rel.side1]
        for a, b in zip(rel.degrees(n0, n1), new.degrees(n0, n1)):
            assert np.array_equal(a, b), rel.name
        b0 = _local_labels(res.partition, sg.offsets[rel.side0], n0)
        b1 = _local_labels(res.partition, sg.offsets[rel.side1], n1)
        e_old = BlockEdgeMatrix.from_edges(rel.src, rel.dst, b0, b1).counts
        e_new = BlockEdgeMatrix.from_edges(new.src, new.dst, b0, b1).counts
        assert np.array_equal(e_old, e_new), rel.name
        loops = rel.side0 == rel.side1 and not np.any(rel.src == rel.dst)
        if is_simple(rel.src, rel.dst, n1, loops):
            assert is_simple(new.src, new.dst, n1, loops), rel.name


def rebuild(db, g):
    attrs = dict(g.attributes)
    attrs.update(dimension_frames(db))
    return assemble_database(g, attrs, db.schema)


@pytest.mark.parametrize("name", ALL_DATASETS)
def test_structure_exact(name, dataset_cache):
    db = dataset_cache(name)
    g = build_entity_graph(db)
    res = run_structure(g, rng=np.random.default_rng(7))
    assert_structure_preserved(g, res)
    syn = rebuild(db, res.graph)
    syn.validate()
    card = cardinality_similarity(db, syn)
    assert all(v == 1.0 for v in card["relations"].values())
    assert res.graph.node_counts == g.node_counts


def test_junction_rows_recreated():
    db, _ = planted_partition(block_size=20, seed=3)
    g = build_entity_graph(db)
    res = run_structure(g, rng=np.random.default_rng(0))
    assert res.summary["junction_tables"] == ["edge"]
    assert res.graph.node_counts["edge"] == g.node_counts["edge"]
    old = set(zip(g.relations["edge.src->node"].dst.tolist(), g.relations["edge.dst->node"].dst.tolist()))
    new = set(zip(res.graph.relations["edge.src->node"].dst.tolist(),
                  res.graph.relations["edge.dst->node"].dst.tolist()))
    assert old != new


def test_deterministic_given_seed(dataset_cache):
    g = build_entity_graph(dataset_cache("berka_like"))
    a = run_structure(g, rng=np.random.default_rng(11)).graph
    b = run_structure(g, rng=np.random.default_rng(11)).graph
    assert a == b


def test_hierarchy_survives_generation(dataset_cache):
    # the generated F1-style graph, read under the input partition, keeps most of the block structure
    g = build_entity_graph(dataset_cache("f1_like"))
    res = run_structure(g, rng=np.random.default_rng(0))
    s = res.summary
    assert s["dl_after"] < s["dl_before"]
    assert s["dl_generated"] < s["dl_before"]
    gt, _ = m2m_transform(res.graph)
    p = infer_partition(sbm_graph(gt), rng=np.random.default_rng(0))
    ratio = p.n_blocks / res.partition.n_blocks
    assert 0.5 <= ratio <= 2.0


def test_never_simple_keeps_multigraph_option(dataset_cache):
    g = build_entity_graph(dataset_cache("cora_like"))
    res = run_structure(g, StructureConfig(simple_graph="never"), np.random.default_rng(0))
    assert_structure_preserved_degrees_only(g, res)


def assert_structure_preserved_degrees_only(g, res):
    for rel in g.structural():
        new = res.graph.relations[rel.name]
        n0, n1 = g.node_counts[rel.side0], g.node_counts[rel.side1]
        for a, b in zip(rel.degrees(n0, n1), new.degrees(n0, n1)):
            assert np.array_equal(a, b)
