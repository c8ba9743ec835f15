"""Type-constrained block partition search: node-move sweeps, block merges, and a nested hierarchy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .. import kernels as default_kernels
from ..graph import EntityGraph
from .blockmodel import (BlockPartition, BlockState, SBMGraph, block_counts, block_terms,
                         description_length, lbinom, lmultiset, sbm_graph)


@dataclass
class InferenceConfig:
    max_rounds: int = 10
    max_sweeps: int = 20
    anneal: bool = False  # Metropolis sweeps with an increasing inverse temperature before the greedy ones
    anneal_sweeps: int = 10
    beta_start: float = 0.5
    beta_end: float = 10.0
    init_groups: int = 60
    spare_blocks: int = 2
    max_depth: int = 3
    max_merge_blocks: int = 200  # skip the quadratic merge search above this many blocks per type


def degree_groups(graph: SBMGraph, n_groups: int = 10) -> np.ndarray:
    """Split every type into up to ``n_groups`` quantile groups of total degree; equal degrees stay together."""
    deg = graph.total_degree()
    labels = np.zeros(graph.n_nodes, dtype=np.int64)
    for t in range(graph.n_types):
        nodes = np.nonzero(graph.node_type == t)[0]
        if len(nodes) == 0:
            continue
        uniq, dense = np.unique(deg[nodes], return_inverse=True)
        k = min(n_groups, len(nodes), len(uniq))
        labels[nodes] = (dense.reshape(-1) * k) // len(uniq)
    return labels


def split_small_groups(graph: SBMGraph, labels: np.ndarray, n_groups: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Randomly subdivide the groups of any type that has fewer than ``n_groups`` of them.

    Degree groups alone leave a type with uniform degrees in one block, and single-node
    moves out of a lone block rarely pay for themselves; a random split gives the sweeps
    and merges something to work with.
    """
    out = labels.copy()
    for t in range(graph.n_types):
        nodes = np.nonzero(graph.node_type == t)[0]
        have = len(np.unique(labels[nodes]))
        target = min(n_groups, len(nodes))
        if have == 0 or have >= target:
            continue
        r = -(-target // have)
        fine = labels[nodes] * r + rng.integers(0, r, len(nodes))
        out[nodes] = np.unique(fine, return_inverse=True)[1].reshape(-1)
    return out


def same_partition(x: np.ndarray, y: np.ndarray) -> bool:
    """True when two label vectors induce the same partition (up to renaming)."""
    pairs = np.unique(np.stack([x, y], axis=1), axis=0)
    return len(pairs) == len(np.unique(x)) == len(np.unique(y))


def _collapse(counts: list[np.ndarray], mapping: np.ndarray, n_new: int) -> list[np.ndarray]:
    S = np.zeros((len(mapping), n_new), dtype=np.int64)
    S[np.arange(len(mapping)), mapping] = 1
    return [S.T @ E @ S for E in counts]


def _pair_merge(n: int, keep: int, drop: int) -> np.ndarray:
    """Mapping of ``n`` ids that folds ``drop`` into ``keep`` and renumbers densely."""
    mapping = np.arange(n)
    mapping[drop] = keep
    return np.unique(mapping, return_inverse=True)[1].reshape(-1)


def _level0_terms(counts, sizes, types, rel_types, n_types) -> float:
    part = BlockPartition([np.zeros(0, dtype=np.int64)], [types])
    return sum(block_terms(counts, sizes, part, rel_types, n_types).values())


def _lg1(x):
    return gammaln(np.asarray(x, dtype=np.float64) + 1.0)


def merge_deltas(counts: list[np.ndarray], sizes: np.ndarray, types: np.ndarray,
                 rel_types: list[tuple[int, int]], n_types: int, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact change of the flat description length for merging every pair of type-``t`` blocks.

    Returns the block ids of type ``t`` and a (k, k) matrix whose (i, j) entry, i < j, is the
    change from folding block ``ids[j]`` into ``ids[i]`` (the lower triangle is +inf).  Only the
    rows and columns of the two blocks change, so each pair costs O(B) per relation.
    """
    ids = np.nonzero(types == t)[0]
    k = len(ids)
    D = np.full((k, k), np.inf)
    if k < 2:
        return ids, D
    n = sizes[ids].astype(np.float64)
    N = n.sum()
    base = np.zeros((k, k))
    # partition prior: one block fewer, and the two size factorials combine
    base += lbinom(N - 1, k - 2) - lbinom(N - 1, k - 1)
    base += _lg1(n)[:, None] + _lg1(n)[None, :] - _lg1(n[:, None] + n[None, :])
    # edge prior at the type-only top level depends on the number of blocks per type
    top = np.bincount(types[sizes > 0], minlength=n_types)
    top_new = top.copy()
    top_new[t] -= 1
    for (t0, t1), E in zip(rel_types, counts):
        if t in (t0, t1):
            m = E.sum()
            base += float(lmultiset(top_new[t0] * top_new[t1], m) - lmultiset(top[t0] * top[t1], m))

    def side(deg):
        # the + sum ln e_r! likelihood term and the degree prior for a merged margin
        d = deg[ids].astype(np.float64)
        dm = d[:, None] + d[None, :]
        return (_lg1(dm) - _lg1(d)[:, None] - _lg1(d)[None, :]
                + lmultiset(n[:, None] + n[None, :], dm) - lmultiset(n, d)[:, None] - lmultiset(n, d)[None, :])

    D[np.triu_indices(k, 1)] = base[np.triu_indices(k, 1)]
    for (t0, t1), E in zip(rel_types, counts):
        if t not in (t0, t1):
            continue
        E = E.astype(np.float64)
        if t0 == t:
            D += side(E.sum(1))
        if t1 == t:
            D += side(E.sum(0))
        lgE = _lg1(E)
        for i in range(k - 1):
            r, s = ids[i], ids[i + 1:]
            if t0 == t and t1 != t:
                rows = E[r][None, :] + E[s]
                old = lgE[r].sum() + lgE[s].sum(1)
                new = _lg1(rows).sum(1)
            elif t1 == t and t0 != t:
                cols = E[:, r][None, :] + E[:, s].T
                old = lgE[:, r].sum() + lgE[:, s].sum(0)
                new = _lg1(cols).sum(1)
            else:
                # both ends in type t: rows r,s and columns r,s fold together
                rr, rs, sr, ss = E[r, r], E[r, s], E[s, r], E[s, s]
                old = (lgE[r].sum() + lgE[s].sum(1) + lgE[:, r].sum() + lgE[:, s].sum(0)
                       - _lg1(rr) - _lg1(rs) - _lg1(sr) - _lg1(ss))
                rows = E[r][None, :] + E[s]
                cols = E[:, r][None, :] + E[:, s].T
                new = (_lg1(rows).sum(1) - _lg1(rr + sr) - _lg1(rs + ss)
                       + _lg1(cols).sum(1) - _lg1(rr + rs) - _lg1(sr + ss)
                       + _lg1(rr + rs + sr + ss))
            # the likelihood carries - sum ln e_rs!
            D[i, i + 1:] -= new - old
    return ids, D


def merge_blocks(graph: SBMGraph, partition: BlockPartition, max_blocks: int = 200) -> BlockPartition:
    """Greedily merge the same-type block pair with the largest description-length drop until none helps."""
    rel_types = graph.rel_types()
    b = partition.levels[0].copy()
    types = partition.block_types[0].copy()
    counts = [block_counts(r, b, len(types)) for r in graph.relations]
    sizes = np.bincount(b, minlength=len(types))
    while True:
        best = (-1e-10, None, None)
        for t in range(graph.n_types):
            if not 2 <= np.sum(types == t) <= max_blocks:
                continue
            ids, D = merge_deltas(counts, sizes, types, rel_types, graph.n_types, t)
            i, j = np.unravel_index(np.argmin(D), D.shape)
            if D[i, j] < best[0]:
                best = (D[i, j], ids[i], ids[j])
        if best[1] is None:
            break
        keep, drop = best[1], best[2]
        mapping = _pair_merge(len(types), keep, drop)
        n_new = len(types) - 1
        new_types = np.zeros(n_new, dtype=np.int64)
        new_types[mapping] = types
        counts = _collapse(counts, mapping, n_new)
        sizes = np.bincount(mapping, weights=sizes, minlength=n_new).astype(np.int64)
        b = mapping[b]
        types = new_types
    return BlockPartition([b], [types])


def fit_hierarchy(graph: SBMGraph, partition: BlockPartition, max_depth: int = 3) -> BlockPartition:
    """Add coarser levels on top of a block partition while they shorten the description.

    Each candidate level is built by agglomerating same-type groups one pair at a
    time (always the cheapest pair) down to one group per type; the best
    configuration seen along that path is kept if it beats stopping here.
    """
    rel_types = graph.rel_types()
    levels = [partition.levels[0]]
    types = [partition.block_types[0]]
    B0 = len(types[0])
    sizes = np.bincount(levels[0], minlength=B0)
    counts = [block_counts(r, levels[0], B0) for r in graph.relations]

    def dl(lv, ty):
        return sum(block_terms(counts, sizes, BlockPartition(lv, ty), rel_types, graph.n_types).values())

    best_dl = dl(levels, types)
    while len(levels) < max_depth:
        below = types[-1]
        U = len(below)
        if U <= graph.n_types:
            break
        mapping = np.arange(U)
        up_types = below.copy()
        path_best = (np.inf, None, None)
        while True:
            cand = []
            for t in range(graph.n_types):
                ids = np.nonzero(up_types == t)[0]
                for i in range(len(ids)):
                    for j in range(i + 1, len(ids)):
                        m2 = _pair_merge(len(up_types), ids[i], ids[j])
                        t2 = np.zeros(len(up_types) - 1, dtype=np.int64)
                        t2[m2] = up_types
                        cand.append((dl(levels + [m2[mapping]], types + [t2]), m2, t2))
            if not cand:
                break
            value, m2, t2 = min(cand, key=lambda c: c[0])
            mapping, up_types = m2[mapping], t2
            if value < path_best[0]:
                path_best = (value, mapping.copy(), up_types.copy())
        if path_best[1] is None or path_best[0] >= best_dl - 1e-10:
            break
        best_dl = path_best[0]
        levels.append(path_best[1])
        types.append(path_best[2])
    return BlockPartition(levels, types)


def infer_partition(g: EntityGraph | SBMGraph, cfg: InferenceConfig | None = None,
                    rng: np.random.Generator | None = None, kernels=None) -> BlockPartition:
    """Search for a low description-length partition; blocks never mix node types."""
    cfg = cfg or InferenceConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    kernels = kernels or default_kernels
    graph = g if isinstance(g, SBMGraph) else sbm_graph(g)
    if graph.n_nodes == 0:
        raise ValueError("cannot partition an empty graph")
    type_only = BlockPartition.by_type(graph.node_type)
    if not graph.relations:
        return type_only

    labels = split_small_groups(graph, degree_groups(graph, cfg.init_groups), cfg.init_groups, rng)
    inc = graph.incidence()
    for _ in range(cfg.max_rounds):
        state = BlockState(graph, labels, cfg.spare_blocks, incidence=inc)
        n = graph.n_nodes
        if cfg.anneal:
            for beta in np.geomspace(cfg.beta_start, cfg.beta_end, cfg.anneal_sweeps):
                state.sweep(kernels, rng.permutation(n), beta, rng.random(n), rng.random(n))
        for _ in range(cfg.max_sweeps):
            moves, _ = state.sweep(kernels, rng.permutation(n))
            if moves == 0:
                break
        merged = merge_blocks(graph, state.partition(), cfg.max_merge_blocks)
        if same_partition(merged.b, labels):
            break
        labels = merged.b
    flat = BlockPartition.from_labels(labels, graph.node_type)
    nested = fit_hierarchy(graph, flat, cfg.max_depth)
    if description_length(graph, nested) <= description_length(graph, type_only):
        return nested
    return type_only
