"""Microcanonical edge sampling with fixed degrees and block edge counts, plus simple-graph rewiring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels as default_kernels


class RewiringError(RuntimeError):
    pass


@dataclass
class RelationDegrees:
    """Out-degrees of side-0 nodes and in-degrees of side-1 nodes of one relation."""

    out_deg: np.ndarray
    in_deg: np.ndarray

    @property
    def m(self) -> int:
        return int(self.out_deg.sum())

    @classmethod
    def from_edges(cls, src: np.ndarray, dst: np.ndarray, n0: int, n1: int) -> RelationDegrees:
        return cls(np.bincount(src, minlength=n0).astype(np.int64),
                   np.bincount(dst, minlength=n1).astype(np.int64))


@dataclass
class BlockEdgeMatrix:
    """``counts[s, t]`` edges from side-0 block ``s`` to side-1 block ``t``."""

    b0: np.ndarray
    b1: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_edges(cls, src, dst, b0, b1) -> BlockEdgeMatrix:
        B0 = int(b0.max()) + 1 if len(b0) else 0
        B1 = int(b1.max()) + 1 if len(b1) else 0
        counts = np.zeros((B0, B1), dtype=np.int64)
        np.add.at(counts, (b0[src], b1[dst]), 1)
        return cls(b0, b1, counts)

    def check(self, degrees: RelationDegrees) -> None:
        B0, B1 = self.counts.shape
        out_tot = np.bincount(self.b0, weights=degrees.out_deg, minlength=B0)
        in_tot = np.bincount(self.b1, weights=degrees.in_deg, minlength=B1)
        if not (np.array_equal(out_tot, self.counts.sum(1)) and np.array_equal(in_tot, self.counts.sum(0))):
            raise ValueError("block edge counts do not match the block degree totals")


def _shuffled_stubs(deg: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One entry per edge endpoint, grouped by block, in random order inside each block."""
    stubs = np.repeat(np.arange(len(deg)), deg)
    return stubs[np.lexsort((rng.random(len(stubs)), labels[stubs]))]


def sample_edge_set(degrees: RelationDegrees, e: BlockEdgeMatrix, rng: np.random.Generator):
    """Uniform stub matching inside every block pair; degrees and ``e.counts`` are reproduced exactly."""
    e.check(degrees)
    E = e.counts
    B0, B1 = E.shape
    # side 0 stubs sorted by block; block s hands its stubs to cells (s,0),(s,1),...
    src = _shuffled_stubs(degrees.out_deg, e.b0, rng)
    src_cell = np.repeat(np.arange(B0 * B1), E.ravel())
    # side 1 stubs sorted by block; block t receives from cells (0,t),(1,t),...
    dst = _shuffled_stubs(degrees.in_deg, e.b1, rng)
    dst_cell = np.repeat((np.arange(B0)[None, :] * B1 + np.arange(B1)[:, None]).ravel(), E.T.ravel())
    src = src[np.argsort(src_cell, kind="stable")]
    dst = dst[np.argsort(dst_cell, kind="stable")]
    return src.astype(np.int64), dst.astype(np.int64)


def _groups(labels: np.ndarray):
    order = np.argsort(labels, kind="stable").astype(np.int64)
    ptr = np.zeros(int(labels.max()) + 2 if len(labels) else 1, dtype=np.int64)
    np.cumsum(np.bincount(labels), out=ptr[1:])
    return ptr, order


def is_simple(src: np.ndarray, dst: np.ndarray, n1: int, forbid_loops: bool) -> bool:
    if forbid_loops and np.any(src == dst):
        return False
    return len(np.unique(src * n1 + dst)) == len(src)


def rewire_to_simple(src: np.ndarray, dst: np.ndarray, e: BlockEdgeMatrix, forbid_loops: bool,
                     rng: np.random.Generator, max_attempts: int | None = None, kernels=None):
    """Swap endpoints of edge pairs sharing a source or target block until no edge repeats.

    Degrees and block edge counts are invariant under every swap.  Raises
    ``RewiringError`` if bad edges remain after ``max_attempts`` (default 100 m).
    """
    kernels = kernels or default_kernels
    src = np.ascontiguousarray(src, dtype=np.int64).copy()
    dst = np.ascontiguousarray(dst, dtype=np.int64).copy()
    m = len(src)
    n1 = len(e.b1)
    if m == 0 or is_simple(src, dst, n1, forbid_loops):
        return src, dst
    max_attempts = 100 * m if max_attempts is None else max_attempts
    gsrc = e.b0[src].astype(np.int64)
    gdst = e.b1[dst].astype(np.int64)
    sp, si = _groups(gsrc)
    dp, di = _groups(gdst)
    seed = int(rng.integers(0, 2**63))
    _, remaining = kernels.rewire_simple(src, dst, gsrc, gdst, n1, bool(forbid_loops), sp, si, dp, di,
                                          gsrc, gdst, max_attempts, seed)
    if remaining:
        raise RewiringError(f"simple-graph rewiring failed: {remaining} parallel or self edges left "
                            f"after {max_attempts} attempts")
    return src, dst
