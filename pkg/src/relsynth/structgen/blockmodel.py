"""Typed multigraph view of an entity graph and the block-model description length."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ..graph import EntityGraph


@dataclass
class SBMRelation:
    name: str
    type0: int
    type1: int
    src: np.ndarray  # global node ids
    dst: np.ndarray

    @property
    def m(self) -> int:
        return len(self.src)


@dataclass
class SBMGraph:
    """Nodes of all non-dimension tables, edges of all structural relations."""

    tables: list[str]
    node_type: np.ndarray
    relations: list[SBMRelation]
    offsets: dict[str, int] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.node_type)

    @property
    def n_types(self) -> int:
        return len(self.tables)

    def type_sizes(self) -> np.ndarray:
        return np.bincount(self.node_type, minlength=self.n_types).astype(np.int64)

    def rel_types(self) -> list[tuple[int, int]]:
        return [(r.type0, r.type1) for r in self.relations]

    def total_degree(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for r in self.relations:
            deg += np.bincount(r.src, minlength=self.n_nodes)
            deg += np.bincount(r.dst, minlength=self.n_nodes)
        return deg

    def incidence(self):
        """CSR incidence lists: (ptr, relation, other endpoint, direction 0=out/1=in)."""
        rel, node, other, direction = [], [], [], []
        for ri, r in enumerate(self.relations):
            rel += [np.full(r.m, ri), np.full(r.m, ri)]
            node += [r.src, r.dst]
            other += [r.dst, r.src]
            direction += [np.zeros(r.m, dtype=np.int64), np.ones(r.m, dtype=np.int64)]
        if not rel:
            empty = np.zeros(0, dtype=np.int64)
            return np.zeros(self.n_nodes + 1, dtype=np.int64), empty, empty, empty
        rel, node, other, direction = (np.concatenate(x).astype(np.int64) for x in (rel, node, other, direction))
        order = np.argsort(node, kind="stable")
        ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(node, minlength=self.n_nodes), out=ptr[1:])
        return ptr, rel[order], other[order], direction[order]


def sbm_graph(g: EntityGraph) -> SBMGraph:
    """Build the block-model view of a (junction-transformed) entity graph."""
    tables = [t for t in g.node_counts if not g.schema[t].dimension]
    offsets, acc = {}, 0
    for t in tables:
        offsets[t] = acc
        acc += g.node_counts[t]
    node_type = np.concatenate([np.full(g.node_counts[t], i, dtype=np.int64) for i, t in enumerate(tables)]) \
        if tables else np.zeros(0, dtype=np.int64)
    rels = []
    for r in g.structural():
        rels.append(SBMRelation(r.name, tables.index(r.side0), tables.index(r.side1),
                                r.src + offsets[r.side0], r.dst + offsets[r.side1]))
    return SBMGraph(tables, node_type, rels, offsets)


@dataclass
class BlockPartition:
    """Node partition constrained by node type, with optional nested coarsenings.

    ``levels[0]`` maps nodes to blocks; ``levels[l]`` maps the blocks of level
    ``l-1`` to blocks of level ``l``.  ``block_types[l]`` gives the node type of
    every block at level ``l``.
    """

    levels: list[np.ndarray]
    block_types: list[np.ndarray]

    @property
    def b(self) -> np.ndarray:
        return self.levels[0]

    @property
    def n_blocks(self) -> int:
        return len(self.block_types[0])

    def blocks_per_type(self, n_types: int, level: int = 0) -> np.ndarray:
        return np.bincount(self.block_types[level], minlength=n_types)

    def check(self, node_type: np.ndarray) -> None:
        """b(v) == b(u) implies type(v) == type(u), at every level."""
        if not np.array_equal(self.block_types[0][self.levels[0]], node_type):
            raise AssertionError("partition mixes node types")
        for lvl in range(1, len(self.levels)):
            if not np.array_equal(self.block_types[lvl][self.levels[lvl]], self.block_types[lvl - 1]):
                raise AssertionError(f"level {lvl} mixes node types")

    def restrict(self, nodes: np.ndarray) -> np.ndarray:
        return self.levels[0][nodes]

    @classmethod
    def from_labels(cls, labels: np.ndarray, node_type: np.ndarray) -> BlockPartition:
        """Compact arbitrary labels into block ids, splitting any label shared across types."""
        pairs = np.stack([node_type, labels], axis=1)
        uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
        return cls([inv.reshape(-1).astype(np.int64)], [uniq[:, 0].astype(np.int64)])

    @classmethod
    def by_type(cls, node_type: np.ndarray) -> BlockPartition:
        return cls.from_labels(np.zeros_like(node_type), node_type)


def lmultiset(n, k):
    n = np.asarray(n, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    out = gammaln(n + k) - gammaln(k + 1) - gammaln(np.maximum(n, 1))
    return np.where(k == 0, 0.0, out)


def lbinom(n, k):
    return gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)


def block_counts(rel: SBMRelation, labels: np.ndarray, n_blocks: int) -> np.ndarray:
    cells = labels[rel.src] * n_blocks + labels[rel.dst]
    return np.bincount(cells, minlength=n_blocks * n_blocks).reshape(n_blocks, n_blocks).astype(np.int64)


def _partition_prior(sizes: np.ndarray, types: np.ndarray, n_types: int) -> float:
    """Per type: ln N + ln C(N-1, B-1) + ln N! - sum ln n_r!  (only nonempty blocks counted)."""
    total = 0.0
    for t in range(n_types):
        nr = sizes[(types == t) & (sizes > 0)]
        N = nr.sum()
        if N == 0:
            continue
        B = len(nr)
        total += np.log(N) + lbinom(N - 1, B - 1) + gammaln(N + 1) - gammaln(nr + 1).sum()
    return float(total)


def edge_terms(graph: SBMGraph) -> float:
    """Partition-independent part of the likelihood: -sum ln k! + sum ln A_ij! per relation."""
    total = 0.0
    for r in graph.relations:
        kout = np.bincount(r.src, minlength=graph.n_nodes)
        kin = np.bincount(r.dst, minlength=graph.n_nodes)
        _, mult = np.unique(r.src * graph.n_nodes + r.dst, return_counts=True)
        total += -gammaln(kout + 1).sum() - gammaln(kin + 1).sum() + gammaln(mult + 1).sum()
    return float(total)


def block_terms(counts: list[np.ndarray], sizes: np.ndarray, partition: BlockPartition,
                rel_types: list[tuple[int, int]], n_types: int) -> dict[str, float]:
    """Every term that depends on the partition, computed from block edge counts alone."""
    btypes = partition.block_types[0]
    like = deg = 0.0
    for (t0, t1), E in zip(rel_types, counts):
        eout, ein = E.sum(1), E.sum(0)
        like += -gammaln(E + 1).sum() + gammaln(eout + 1).sum() + gammaln(ein + 1).sum()
        deg += (lmultiset(sizes[btypes == t0], eout[btypes == t0]).sum()
                + lmultiset(sizes[btypes == t1], ein[btypes == t1]).sum())
    part = _partition_prior(sizes, btypes, n_types)

    # nested levels: each level is a block model over the nonempty blocks of the level below
    hier = 0.0
    cur_types = btypes
    cur_present = sizes > 0
    for lvl in range(1, len(partition.levels)):
        mapping = partition.levels[lvl]
        up_types = partition.block_types[lvl]
        U = len(up_types)
        members = np.bincount(mapping[cur_present], minlength=U)
        part += _partition_prior(members, up_types, n_types)
        cells = np.outer(members, members)
        new_counts = []
        for (t0, t1), E in zip(rel_types, counts):
            E_up = np.zeros((U, U), dtype=np.int64)
            idx_r, idx_s = np.nonzero(E)
            np.add.at(E_up, (mapping[idx_r], mapping[idx_s]), E[idx_r, idx_s])
            mask = (up_types[:, None] == t0) & (up_types[None, :] == t1)
            hier += lmultiset(cells[mask], E_up[mask]).sum()
            new_counts.append(E_up)
        counts = new_counts
        cur_types = up_types
        cur_present = members > 0
    top = np.bincount(cur_types[cur_present], minlength=n_types)
    for (t0, t1), E in zip(rel_types, counts):
        hier += float(lmultiset(top[t0] * top[t1], E.sum()))
    return {"likelihood": float(like), "degree_prior": float(deg),
            "partition_prior": float(part), "edge_prior": float(hier)}


def description_length(graph: SBMGraph, partition: BlockPartition, parts: bool = False):
    """Description length (nats) of the graph under a nested degree-corrected block model.

    Data term: negative log microcanonical likelihood of each relation given
    degrees and block edge counts.  Model terms: uniform degree prior per
    block, partition priors per level, and the nested edge-count prior whose
    top level is the node types.
    """
    b = partition.levels[0]
    B = partition.n_blocks
    sizes = np.bincount(b, minlength=B)
    counts = [block_counts(r, b, B) for r in graph.relations]
    terms = block_terms(counts, sizes, partition, graph.rel_types(), graph.n_types)
    terms["likelihood"] += edge_terms(graph)
    total = float(sum(terms.values()))
    return (total, terms) if parts else total


class BlockState:
    """Mutable block-model state in the array layout the sweep kernels expect."""

    def __init__(self, graph: SBMGraph, labels: np.ndarray, extra_blocks: int = 2, incidence=None):
        self.graph = graph
        T = graph.n_types
        self.type_N = graph.type_sizes()
        # each type owns a contiguous range of block ids with some spare (empty) blocks
        caps, init_ids = [], np.zeros(graph.n_nodes, dtype=np.int64)
        start = 0
        self.tstart = np.zeros(T, dtype=np.int64)
        self.tend = np.zeros(T, dtype=np.int64)
        for t in range(T):
            nodes = np.nonzero(graph.node_type == t)[0]
            uniq, inv = np.unique(labels[nodes], return_inverse=True)
            cap = min(len(uniq) + extra_blocks, max(len(nodes), 1))
            init_ids[nodes] = start + inv
            self.tstart[t] = start
            self.tend[t] = start + cap
            start += cap
            caps.append(cap)
        self.B = start
        self.block_type = np.repeat(np.arange(T), caps).astype(np.int64)
        self.b = init_ids
        self.inc = incidence if incidence is not None else graph.incidence()
        R = len(graph.relations)
        self.rel_t0 = np.array([r.type0 for r in graph.relations], dtype=np.int64)
        self.rel_t1 = np.array([r.type1 for r in graph.relations], dtype=np.int64)
        self.rel_m = np.array([r.m for r in graph.relations], dtype=np.int64)
        self.E = np.zeros((R, self.B, self.B), dtype=np.int64)
        self.recount()
        size = graph.n_nodes + int(self.rel_m.sum()) + self.B * self.B + 8
        self.lgt = gammaln(np.arange(size, dtype=np.float64))
        self.lgt[0] = np.inf

    def recount(self):
        for ri, r in enumerate(self.graph.relations):
            self.E[ri] = block_counts(r, self.b, self.B)
        self.eout = self.E.sum(2)
        self.ein = self.E.sum(1)
        self.nb = np.bincount(self.b, minlength=self.B).astype(np.int64)
        self.type_B = np.bincount(self.block_type[self.nb > 0], minlength=self.graph.n_types).astype(np.int64)

    def sweep(self, kernels, order, beta=0.0, u_pick=None, u_accept=None):
        n = len(order)
        u_pick = np.zeros(n) if u_pick is None else u_pick
        u_accept = np.zeros(n) if u_accept is None else u_accept
        ptr, rel, other, direction = self.inc
        return kernels.sbm_sweep(
            np.ascontiguousarray(order, dtype=np.int64), self.graph.node_type, self.b, ptr, rel, other,
            direction, self.E, self.eout, self.ein, self.nb, self.type_N, self.type_B, self.tstart,
            self.tend, self.rel_t0, self.rel_t1, self.rel_m, self.lgt, float(beta), u_pick, u_accept)

    def partition(self) -> BlockPartition:
        return BlockPartition.from_labels(self.b, self.graph.node_type)

    def merge(self, keep: int, drop: int) -> None:
        self.b[self.b == drop] = keep
        self.recount()
