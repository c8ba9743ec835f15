# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: block-model node moves, simple-graph rewiring, GBDT histograms.

Every function mirrors ``_pykernels`` exactly (same arithmetic order, same
random stream) so the two back-ends produce identical results.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

ctypedef int64_t i64


# lgt[i] == lgamma(i); every argument below is an integer count.
cdef inline double lg1(const double[:] lgt, i64 x) noexcept nogil:
    return lgt[x + 1]


cdef inline double lmultiset(const double[:] lgt, i64 n, i64 k) noexcept nogil:
    if k == 0:
        return 0.0
    return lgt[n + k] - lgt[k + 1] - lgt[n]


cdef inline double lbinom(const double[:] lgt, i64 n, i64 k) noexcept nogil:
    return lgt[n + 1] - lgt[k + 1] - lgt[n - k + 1]


cdef double local_terms(i64 a, i64 c, i64 T, i64[:, :, :] E, i64[:, :] eout, i64[:, :] ein,
                        i64[:] nb, i64[:] type_N, i64[:] type_B, i64[:] tstart, i64[:] tend,
                        i64[:] rel_t0, i64[:] rel_t1, i64[:] rel_m, const double[:] lgt) noexcept nogil:
    cdef double total = 0.0
    cdef i64 r, j, t0, t1, R = E.shape[0]
    cdef i64 NT
    for r in range(R):
        t0 = rel_t0[r]
        t1 = rel_t1[r]
        if t0 != T and t1 != T:
            continue
        if t0 == T:
            for j in range(tstart[t1], tend[t1]):
                total -= lg1(lgt, E[r, a, j]) + lg1(lgt, E[r, c, j])
            total += lg1(lgt, eout[r, a]) + lg1(lgt, eout[r, c])
            total += lmultiset(lgt, nb[a], eout[r, a]) + lmultiset(lgt, nb[c], eout[r, c])
        if t1 == T:
            for j in range(tstart[t0], tend[t0]):
                if t0 == T and (j == a or j == c):
                    continue
                total -= lg1(lgt, E[r, j, a]) + lg1(lgt, E[r, j, c])
            total += lg1(lgt, ein[r, a]) + lg1(lgt, ein[r, c])
            total += lmultiset(lgt, nb[a], ein[r, a]) + lmultiset(lgt, nb[c], ein[r, c])
        total += lmultiset(lgt, type_B[t0] * type_B[t1], rel_m[r])
    NT = type_N[T]
    total += log(<double>NT) + lbinom(lgt, NT - 1, type_B[T] - 1) + lg1(lgt, NT) - lg1(lgt, nb[a]) - lg1(lgt, nb[c])
    return total


cdef void apply_move(i64 v, i64 src_b, i64 dst_b, i64[:] b, i64[:] inc_ptr, i64[:] inc_rel,
                     i64[:] inc_other, i64[:] inc_dir, i64[:, :, :] E, i64[:, :] eout,
                     i64[:, :] ein, i64[:] nb, i64[:] type_B, i64 T) noexcept nogil:
    cdef i64 k, r, u, bu
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


cdef double move_delta(i64 v, i64 a, i64 c, i64 T, i64[:] b, i64[:] inc_ptr, i64[:] inc_rel,
                       i64[:] inc_other, i64[:] inc_dir, i64[:, :, :] E, i64[:, :] eout,
                       i64[:, :] ein, i64[:] nb, i64[:] type_N, i64[:] type_B, i64[:] tstart,
                       i64[:] tend, i64[:] rel_t0, i64[:] rel_t1, i64[:] rel_m, const double[:] lgt) noexcept nogil:
    cdef double before, after
    before = local_terms(a, c, T, E, eout, ein, nb, type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt)
    apply_move(v, a, c, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein, nb, type_B, T)
    after = local_terms(a, c, T, E, eout, ein, nb, type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt)
    apply_move(v, c, a, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein, nb, type_B, T)
    return after - before


def sbm_sweep(i64[:] order, i64[:] node_type, i64[:] b, i64[:] inc_ptr, i64[:] inc_rel,
              i64[:] inc_other, i64[:] inc_dir, i64[:, :, :] E, i64[:, :] eout, i64[:, :] ein,
              i64[:] nb, i64[:] type_N, i64[:] type_B, i64[:] tstart, i64[:] tend,
              i64[:] rel_t0, i64[:] rel_t1, i64[:] rel_m, const double[:] lgt, double beta,
              double[:] u_pick, double[:] u_accept):
    """One sweep of single-node moves; greedy when ``beta <= 0``, Metropolis otherwise.

    Returns (number of moves, summed description-length change).
    """
    cdef i64 idx, v, T, a, c, best, n_cand, pick, k, first_empty
    cdef double d, best_d, total = 0.0
    cdef i64 moves = 0
    with nogil:
        for idx in range(order.shape[0]):
            v = order[idx]
            T = node_type[v]
            a = b[v]
            first_empty = -1
            n_cand = 0
            for c in range(tstart[T], tend[T]):
                if nb[c] > 0:
                    if c != a:
                        n_cand += 1
                elif first_empty < 0 and nb[a] > 1:
                    first_empty = c
            if first_empty >= 0:
                n_cand += 1
            if n_cand == 0:
                continue
            if beta <= 0:
                best = a
                best_d = 0.0
                for c in range(tstart[T], tend[T]):
                    if c == a or (nb[c] == 0 and c != first_empty):
                        continue
                    d = move_delta(v, a, c, T, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein,
                                   nb, type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt)
                    if d < best_d - 1e-10:
                        best_d = d
                        best = c
                if best != a:
                    apply_move(v, a, best, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein, nb,
                               type_B, T)
                    moves += 1
                    total += best_d
            else:
                pick = <i64>(u_pick[idx] * n_cand)
                if pick >= n_cand:
                    pick = n_cand - 1
                k = 0
                best = -1
                for c in range(tstart[T], tend[T]):
                    if c == a or (nb[c] == 0 and c != first_empty):
                        continue
                    if k == pick:
                        best = c
                        break
                    k += 1
                d = move_delta(v, a, best, T, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein,
                               nb, type_N, type_B, tstart, tend, rel_t0, rel_t1, rel_m, lgt)
                if d <= 0 or u_accept[idx] < exp(-beta * d):
                    apply_move(v, a, best, b, inc_ptr, inc_rel, inc_other, inc_dir, E, eout, ein, nb,
                               type_B, T)
                    moves += 1
                    total += d
    return moves, total


cdef inline uint64_t splitmix_next(uint64_t* state) noexcept nogil:
    cdef uint64_t z
    state[0] += <uint64_t>0x9E3779B97F4A7C15
    z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline i64 randbelow(uint64_t* state, i64 n) noexcept nogil:
    return <i64>(splitmix_next(state) % <uint64_t>n)


def rewire_simple(i64[:] src, i64[:] dst, i64[:] bsrc, i64[:] bdst, i64 n1, bint same_side,
                  i64[:] grp_src_ptr, i64[:] grp_src_idx, i64[:] grp_dst_ptr, i64[:] grp_dst_idx,
                  i64[:] edge_gsrc, i64[:] edge_gdst, i64 max_attempts, uint64_t seed):
    """Degree- and block-count-preserving swaps until no parallel edges or self-loops remain.

    ``src`` and ``dst`` are modified in place.  Returns (attempts used, remaining bad edges).
    """
    cdef uint64_t state = seed
    cdef i64 m = src.shape[0]
    cdef i64 i, j, k, g, lo, hi, attempts = 0, nbad, ui, vi, uj, vj
    cdef bint by_src
    cdef object counts = {}
    cdef object key
    for i in range(m):
        key = src[i] * n1 + dst[i]
        counts[key] = counts.get(key, 0) + 1
    bad = []
    for i in range(m):
        if counts[src[i] * n1 + dst[i]] > 1 or (same_side and src[i] == dst[i]):
            bad.append(i)
    nbad = len(bad)
    while nbad > 0 and attempts < max_attempts:
        k = randbelow(&state, nbad)
        i = bad[k]
        ui = src[i]
        vi = dst[i]
        if counts[ui * n1 + vi] <= 1 and not (same_side and ui == vi):
            bad[k] = bad[nbad - 1]
            bad.pop()
            nbad -= 1
            continue
        attempts += 1
        by_src = splitmix_next(&state) & 1
        if by_src:
            g = edge_gsrc[i]
            lo = grp_src_ptr[g]
            hi = grp_src_ptr[g + 1]
            j = grp_src_idx[lo + randbelow(&state, hi - lo)]
        else:
            g = edge_gdst[i]
            lo = grp_dst_ptr[g]
            hi = grp_dst_ptr[g + 1]
            j = grp_dst_idx[lo + randbelow(&state, hi - lo)]
        if j == i:
            continue
        uj = src[j]
        vj = dst[j]
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
    return attempts, nbad


def gbdt_histogram(const unsigned char[:, :] X, double[:] grad, double[:] hess, i64[:] rows, i64 nbins):
    """Per-feature sums of gradient and hessian for every bin over the given rows."""
    cdef i64 F = X.shape[1], n = rows.shape[0]
    out = np.zeros((F, nbins, 2), dtype=np.float64)
    cdef double[:, :, :] h = out
    cdef i64 k, r, f, bn
    with nogil:
        for k in range(n):
            r = rows[k]
            for f in range(F):
                bn = X[r, f]
                h[f, bn, 0] += grad[r]
                h[f, bn, 1] += hess[r]
    return out
