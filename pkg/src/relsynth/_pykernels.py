"""Pure-Python reference versions of the compiled kernels (same signatures, same results)."""
from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1


# lgt[i] == lgamma(i); every argument below is an integer count.
def _lg1(lgt, x):
    return lgt[x + 1]


def _lmultiset(lgt, n, k):
    if k == 0:
        return 0.0
    return lgt[n + k] - lgt[k + 1] - lgt[n]


def _lbinom(lgt, n, k):
    return lgt[n + 1] - lgt[k + 1] - lgt[n - k + 1]


def _local_terms(a, c, T, E, eout, ein, nb, type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt):
    total = 0.0
    for r in range(E.shape[0]):
        t0 = rel_t0[r]
        t1 = rel_t1[r]
        if t0 != T and t1 != T:
            continue
        if t0 == T:
            for j in range(tstart[t1], tend[t1]):
                total -= _lg1(lgt, E[r, a, j]) + _lg1(lgt, E[r, c, j])
            total += _lg1(lgt, eout[r, a]) + _lg1(lgt, eout[r, c])
            total += _lmultiset(lgt, nb[a], eout[r, a]) + _lmultiset(lgt, nb[c], eout[r, c])
        if t1 == T:
            for j in range(tstart[t0], tend[t0]):
                if t0 == T and (j == a or j == c):
                    continue
                total -= _lg1(lgt, E[r, j, a]) + _lg1(lgt, E[r, j, c])
            total += _lg1(lgt, ein[r, a]) + _lg1(lgt, ein[r, c])
            total += _lmultiset(lgt, nb[a], ein[r, a]) + _lmultiset(lgt, nb[c], ein[r, c])
        total += _lmultiset(lgt, type_B[t0] * type_B[t1], rel_m[r])
    NT = type_N[T]
    total += math.log(float(NT)) + _lbinom(lgt, NT - 1, type_B[T] - 1) + _lg1(lgt, NT) - _lg1(lgt, nb[a]) - _lg1(lgt, nb[c])
    return total


def _apply_move(v, src_b, dst_b, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein, nb, type_B, T):
    for k in range(inc_ptr[v], inc_ptr[v + 1]):
        r = inc_rel[k]
        u = inc_other[k]
        if inc_dir[k] == 0:
            if u == v:
                E[r, src_b, src_b] -= 1
                E[r, dst_b, dst_b] += 1
            else:
                bu = b[u]
                E[r, src_b, bu] -= 1
                E[r, dst_b, bu] += 1
            eout[r, src_b] -= 1
            eout[r, dst_b] += 1
        else:
            if u != v:
                bu = b[u]
                E[r, bu, src_b] -= 1
                E[r, bu, dst_b] += 1
            ein[r, src_b] -= 1
            ein[r, dst_b] += 1
    nb[src_b] -= 1
    nb[dst_b] += 1
    if nb[src_b] == 0:
        type_B[T] -= 1
    if nb[dst_b] == 1:
        type_B[T] += 1
    b[v] = dst_b


def sbm_sweep(order, node_type, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein, nb,
              type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt, beta, u_pick, u_accept):
    """One sweep of single-node moves; greedy when ``beta <= 0``, Metropolis otherwise."""
    graph = (inc_ptr, inc_rel, inc_other, inc_dir)
    state = (E, eout, ein, nb)
    ctx = (type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt)

    def delta(v, a, c, T):
        before = _local_terms(a, c, T, E, eout, ein, nb, *ctx)
        _apply_move(v, a, c, b, *graph, *state, type_B, T)
        after = _local_terms(a, c, T, E, eout, ein, nb, *ctx)
        _apply_move(v, c, a, b, *graph, *state, type_B, T)
        return after - before

    moves, total = 0, 0.0
    for idx in range(len(order)):
        v = order[idx]
        T = node_type[v]
        a = b[v]
        first_empty = -1
        cands = []
        for c in range(tstart[T], tend[T]):
            if nb[c] > 0:
                if c != a:
                    cands.append(c)
            elif first_empty < 0 and nb[a] > 1:
                first_empty = c
                cands.append(c)
        if not cands:
            continue
        if beta <= 0:
            best, best_d = a, 0.0
            for c in cands:
                d = delta(v, a, c, T)
                if d < best_d - 1e-10:
                    best_d, best = d, c
            if best != a:
                _apply_move(v, a, best, b, *graph, *state, type_B, T)
                moves += 1
                total += best_d
        else:
            pick = min(int(u_pick[idx] * len(cands)), len(cands) - 1)
            c = cands[pick]
            d = delta(v, a, c, T)
            if d <= 0 or u_accept[idx] < math.exp(-beta * d):
                _apply_move(v, a, c, b, *graph, *state, type_B, T)
                moves += 1
                total += d
    return moves, total


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % int(n)


def rewire_simple(src, dst, bsrc, bdst, n1, same_side, grp_src_ptr, grp_src_idx, grp_dst_ptr,
                  grp_dst_idx, edge_gsrc, edge_gdst, max_attempts, seed):
    """Degree- and block-count-preserving swaps until no parallel edges or self-loops remain."""
    rng = SplitMix64(int(seed))
    m = len(src)
    counts: dict[int, int] = {}
    for i in range(m):
        key = int(src[i]) * n1 + int(dst[i])
        counts[key] = counts.get(key, 0) + 1
    bad = [i for i in range(m)
           if counts[int(src[i]) * n1 + int(dst[i])] > 1 or (same_side and src[i] == dst[i])]
    attempts = 0
    while bad and attempts < max_attempts:
        k = rng.below(len(bad))
        i = bad[k]
        ui, vi = int(src[i]), int(dst[i])
        if counts[ui * n1 + vi] <= 1 and not (same_side and ui == vi):
            bad[k] = bad[-1]
            bad.pop()
            continue
        attempts += 1
        by_src = rng.next() & 1
        if by_src:
            g = edge_gsrc[i]
            lo, hi = grp_src_ptr[g], grp_src_ptr[g + 1]
            j = grp_src_idx[lo + rng.below(hi - lo)]
        else:
            g = edge_gdst[i]
            lo, hi = grp_dst_ptr[g], grp_dst_ptr[g + 1]
            j = grp_dst_idx[lo + rng.below(hi - lo)]
        if j == i:
            continue
        uj, vj = int(src[j]), int(dst[j])
        if vj == vi or uj == ui:
            continue
        if same_side and (ui == vj or uj == vi):
            continue
        if counts.get(ui * n1 + vj, 0) > 0 or counts.get(uj * n1 + vi, 0) > 0:
            continue
        counts[ui * n1 + vi] -= 1
        counts[uj * n1 + vj] -= 1
        counts[ui * n1 + vj] = 1
        counts[uj * n1 + vi] = 1
        # swap the endpoint inside the shared block so every edge keeps its (source, target) blocks
        if by_src:
            src[i] = uj
            src[j] = ui
        else:
            dst[i] = vj
            dst[j] = vi
    return attempts, len(bad)


def gbdt_histogram(X, grad, hess, rows, nbins):
    """Per-feature sums of gradient and hessian for every bin over the given rows."""
    F = X.shape[1]
    sub = X[rows].astype(np.int64) + (np.arange(F, dtype=np.int64) * nbins)[None, :]
    flat = sub.T.ravel()  # feature-major so each (feature, bin) sums rows in order
    g = np.tile(grad[rows], F)
    h = np.tile(hess[rows], F)
    out = np.empty((F, nbins, 2))
    out[:, :, 0] = np.bincount(flat, weights=g, minlength=F * nbins).reshape(F, nbins)
    out[:, :, 1] = np.bincount(flat, weights=h, minlength=F * nbins).reshape(F, nbins)
    return out
