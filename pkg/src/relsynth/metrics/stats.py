"""Marginal, pairwise, multi-hop and cardinality fidelity scores."""
from __future__ import annotations

import itertools
import warnings

import numpy as np
import pandas as pd

from ..database import Database
from ..graph import attribute_frame
from ..schema import Link

NULL = "\x00null"  # stands in for a missing categorical so it counts as its own category
MAX_JOIN_ROWS = 200_000


def _numeric_values(x) -> np.ndarray:
    s = pd.Series(x)
    if pd.api.types.is_datetime64_any_dtype(s):
        return s.dropna().astype("int64").to_numpy()
    v = pd.to_numeric(s, errors="coerce").to_numpy(dtype=np.float64)
    return v[~np.isnan(v)]


def _labels(x) -> np.ndarray:
    s = pd.Series(x, dtype=object)
    return np.array([NULL if v is None or (isinstance(v, float) and np.isnan(v)) else str(v) for v in s],
                    dtype=object)


def ks_statistic(a, b) -> tuple[int, int]:
    """sup |F_a - F_b| as the exact fraction (numerator, denominator)."""
    a, b = np.sort(np.asarray(a)), np.sort(np.asarray(b))
    if len(a) == 0 or len(b) == 0:
        raise ValueError("kst needs two non-empty samples")
    grid = np.union1d(a, b)
    ca = np.searchsorted(a, grid, side="right").astype(object)
    cb = np.searchsorted(b, grid, side="right").astype(object)
    na, nb = len(a), len(b)
    diff = max(abs(int(x) * nb - int(y) * na) for x, y in zip(ca, cb))
    return diff, na * nb


def kst_score(real, syn) -> float:
    """1 - Kolmogorov-Smirnov statistic between the empirical distributions (nulls dropped)."""
    r, s = _numeric_values(real), _numeric_values(syn)
    if len(r) == 0 and len(s) == 0:
        raise ValueError("kst needs two non-empty samples")
    if len(r) == 0 or len(s) == 0:
        return 0.0
    num, den = ks_statistic(r, s)
    return (den - num) / den


def tv_distance(real, syn) -> tuple[int, int]:
    r, s = _labels(real), _labels(syn)
    if len(r) == 0 or len(s) == 0:
        raise ValueError("tvd needs two non-empty samples")
    cats_r, cnt_r = np.unique(r, return_counts=True)
    cats_s, cnt_s = np.unique(s, return_counts=True)
    fr = dict(zip(cats_r.tolist(), cnt_r.tolist()))
    fs = dict(zip(cats_s.tolist(), cnt_s.tolist()))
    nr, ns = len(r), len(s)
    total = sum(abs(fr.get(k, 0) * ns - fs.get(k, 0) * nr) for k in set(fr) | set(fs))
    return total, 2 * nr * ns


def tvd_score(real, syn) -> float:
    """1 - total variation distance between category frequencies (null is a category)."""
    num, den = tv_distance(real, syn)
    return (den - num) / den


def column_kinds(frame: pd.DataFrame, categorical: set[str] | None = None) -> dict[str, str]:
    """'num' for numeric and datetime columns, 'cat' for everything else."""
    categorical = categorical or set()
    out = {}
    for c in frame.columns:
        s = frame[c]
        numeric = pd.api.types.is_numeric_dtype(s) or pd.api.types.is_datetime64_any_dtype(s)
        out[c] = "num" if numeric and c not in categorical and not pd.api.types.is_bool_dtype(s) else "cat"
    return out


def shape_score(real: pd.DataFrame, syn: pd.DataFrame) -> dict:
    """Per-column kst (numeric) or tvd (categorical) and their mean."""
    kinds = column_kinds(real)
    cols = {c: (kst_score if k == "num" else tvd_score)(real[c], syn[c]) for c, k in kinds.items()}
    return {"columns": cols, "score": float(np.mean(list(cols.values()))) if cols else float("nan")}


def _as_float(x) -> np.ndarray:
    s = pd.Series(x).reset_index(drop=True)
    if pd.api.types.is_datetime64_any_dtype(s):
        out = s.astype("int64").to_numpy().astype(np.float64)
        out[s.isna().to_numpy()] = np.nan
        return out
    return pd.to_numeric(s, errors="coerce").to_numpy(dtype=np.float64)


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    ok = ~(np.isnan(x) | np.isnan(y))
    x, y = x[ok], y[ok]
    if len(x) < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.clip(np.corrcoef(x, y)[0, 1], -1.0, 1.0))


def contingency_similarity(a_real, b_real, a_syn, b_syn) -> float:
    """1 - half the L1 distance between the two joint frequency tables."""
    jr = pd.Series(list(zip(a_real, b_real)), dtype=object).value_counts(normalize=True)
    js = pd.Series(list(zip(a_syn, b_syn)), dtype=object).value_counts(normalize=True)
    keys = jr.index.union(js.index)
    diff = (jr.reindex(keys, fill_value=0.0) - js.reindex(keys, fill_value=0.0)).abs().sum()
    return float(1.0 - 0.5 * diff)


def quantile_bins(real: np.ndarray, syn: np.ndarray, n_bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Bin both samples with the real sample's quantile edges; missing values get their own bin."""
    ok = real[~np.isnan(real)]
    edges = np.unique(np.quantile(ok, np.linspace(0, 1, n_bins + 1)[1:-1])) if len(ok) else np.zeros(0)

    def code(v):
        out = np.searchsorted(edges, v, side="right").astype(object)
        out[np.isnan(v)] = NULL
        return out

    return code(real), code(syn)


def pair_score(kind_a: str, kind_b: str, ra, rb, sa, sb) -> float | None:
    """Similarity of the dependence between two columns in real vs synthetic rows."""
    if kind_a == "num" and kind_b == "num":
        pr = pearson(_as_float(ra), _as_float(rb))
        ps = pearson(_as_float(sa), _as_float(sb))
        if pr is None or ps is None:
            return None
        return 1.0 - abs(pr - ps) / 2.0
    cols = []
    for kind, r, s in ((kind_a, ra, sa), (kind_b, rb, sb)):
        if kind == "num":
            cols.append(quantile_bins(_as_float(r), _as_float(s)))
        else:
            cols.append((_labels(r), _labels(s)))
    (ar, as_), (br, bs) = cols
    return contingency_similarity(ar, br, as_, bs)


def trend_score(real: pd.DataFrame, syn: pd.DataFrame) -> dict:
    """Mean pairwise dependence similarity over all column pairs of one table."""
    kinds = column_kinds(real)
    if len(kinds) < 2:
        raise ValueError("trend needs at least two columns")
    pairs = {}
    for a, b in itertools.combinations(kinds, 2):
        s = pair_score(kinds[a], kinds[b], real[a], real[b], syn[a], syn[b])
        if s is None:
            warnings.warn(f"trend: correlation undefined for ({a}, {b}); pair skipped", stacklevel=2)
            continue
        pairs[f"{a}|{b}"] = s
    return {"pairs": pairs, "score": float(np.mean(list(pairs.values()))) if pairs else float("nan")}


def fk_paths(db_schema, k: int) -> list[list[tuple[Link, bool]]]:
    """All walks of k FK hops through the schema graph, each as [(link, child_to_parent)].

    Hops may go either way along a link but never straight back over the link just used;
    a walk and its reverse are counted once.
    """
    if k < 1:
        raise ValueError("depth must be at least 1")
    links = list(db_schema.links)
    walks = []

    def extend(table, path):
        if len(path) == k:
            walks.append(list(path))
            return
        for lk in links:
            if path and path[-1][0] is lk:
                continue
            if lk.child == table:
                extend(lk.parent, path + [(lk, True)])
            if lk.parent == table:
                extend(lk.child, path + [(lk, False)])

    for t in db_schema.tables:
        extend(t.name, [])
    seen, out = set(), []
    for w in walks:
        key = tuple((lk.name, up) for lk, up in w)
        rev = tuple((lk.name, not up) for lk, up in reversed(w))
        if rev in seen:
            continue
        seen.add(key)
        out.append(w)
    if not out:
        raise ValueError(f"no foreign-key path of length {k}")
    return out


def _start_table(path) -> str:
    lk, up = path[0]
    return lk.child if up else lk.parent


def join_path(db: Database, path, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Row indices (start table, end table) of the inner join along a path."""
    schema = db.schema
    cur_table = _start_table(path)
    left = np.arange(len(db.tables[cur_table]))
    cur = left.copy()
    for lk, up in path:
        child = db.tables[lk.child]
        parent = db.tables[lk.parent]
        pk = schema[lk.parent].primary_key
        fk = child[lk.column].to_numpy(dtype=object)
        pidx = pd.Index(parent[pk].to_numpy(dtype=object)).get_indexer(fk)
        if up:
            nxt = pidx[cur]
            keep = nxt >= 0
            left, cur = left[keep], nxt[keep]
        else:
            child_rows = np.nonzero(pidx >= 0)[0]
            order = np.argsort(pidx[child_rows], kind="stable")
            child_rows = child_rows[order]
            parents_of = pidx[child_rows]
            starts = np.searchsorted(parents_of, cur, side="left")
            ends = np.searchsorted(parents_of, cur, side="right")
            counts = ends - starts
            left = np.repeat(left, counts)
            offs = np.repeat(starts - np.r_[0, np.cumsum(counts)[:-1]], counts) + np.arange(counts.sum())
            cur = child_rows[offs]
        if len(cur) > MAX_JOIN_ROWS:
            pick = np.sort(rng.choice(len(cur), MAX_JOIN_ROWS, replace=False))
            left, cur = left[pick], cur[pick]
    return left, cur


def _end_table(path) -> str:
    lk, up = path[-1]
    return lk.parent if up else lk.child


def khop_trend(real: Database, syn: Database, k: int, seed: int = 0) -> dict:
    """Trend over column pairs spanning the two ends of every k-hop join path."""
    paths = fk_paths(real.schema, k)
    out = {}
    for path in paths:
        a, b = _start_table(path), _end_table(path)
        fa_r, fb_r = attribute_frame(real, a), attribute_frame(real, b)
        fa_s, fb_s = attribute_frame(syn, a), attribute_frame(syn, b)
        ka, kb = column_kinds(fa_r), column_kinds(fb_r)
        if not ka or not kb:
            continue
        lr, rr = join_path(real, path, np.random.default_rng(seed))
        ls, rs = join_path(syn, path, np.random.default_rng(seed))
        if len(lr) == 0 or len(ls) == 0:
            continue
        scores = []
        for ca, cb in itertools.product(ka, kb):
            s = pair_score(ka[ca], kb[cb], fa_r[ca].to_numpy()[lr], fb_r[cb].to_numpy()[rr],
                           fa_s[ca].to_numpy()[ls], fb_s[cb].to_numpy()[rs])
            if s is not None:
                scores.append(s)
        if scores:
            name = " ".join(f"{lk.name}{'^' if up else 'v'}" for lk, up in path)
            out[name] = float(np.mean(scores))
    return {"paths": out, "score": float(np.mean(list(out.values()))) if out else float("nan")}


def child_counts(db: Database, link: Link) -> np.ndarray:
    """Number of child rows referencing each parent row (zeros included)."""
    parent = db.tables[link.parent]
    pk = db.schema[link.parent].primary_key
    fk = db.tables[link.child][link.column].to_numpy(dtype=object)
    idx = pd.Index(parent[pk].to_numpy(dtype=object)).get_indexer(fk)
    return np.bincount(idx[idx >= 0], minlength=len(parent))


def cardinality_similarity(real: Database, syn: Database) -> dict:
    """Per FK relation, 1 - KS statistic between the child-count distributions."""
    out = {}
    for lk in real.schema.links:
        num, den = ks_statistic(child_counts(real, lk), child_counts(syn, lk))
        out[lk.name] = (den - num) / den
    return {"relations": out, "score": float(np.mean(list(out.values()))) if out else float("nan")}
