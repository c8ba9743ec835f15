"""Classifier two-sample tests: per table, and on parent tables augmented with child aggregates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from ..database import Database
from ..graph import attribute_frame
from .gbdt import GBDTClassifier, GBDTConfig
from .stats import _as_float, _labels, column_kinds

MIN_ROWS = 50


@dataclass
class C2STConfig:
    folds: int = 5
    max_categories: int = 50
    max_rows: int | None = None  # per side; larger tables are subsampled
    gbdt: GBDTConfig = field(default_factory=GBDTConfig)
    # any factory returning an object with fit(X, y) and predict(X) can replace the built-in trees
    classifier: Callable[[], object] | None = None


def feature_matrix(real: pd.DataFrame, syn: pd.DataFrame, max_categories: int = 50,
                   categorical: set[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Numerics as floats (NaN kept); categoricals one-hot over the real side's most frequent values."""
    kinds = column_kinds(real, categorical)
    fr, fs = [], []
    for c, kind in kinds.items():
        if kind == "num":
            fr.append(_as_float(real[c])[:, None])
            fs.append(_as_float(syn[c])[:, None])
            continue
        lr, ls = _labels(real[c]), _labels(syn[c])
        vals, counts = np.unique(lr, return_counts=True)
        top = vals[np.argsort(-counts, kind="stable")][:max_categories]
        fr.append((lr[:, None] == top[None, :]).astype(np.float64))
        fs.append((ls[:, None] == top[None, :]).astype(np.float64))
        if len(vals) > max_categories:  # a bucket for everything outside the kept values
            fr.append((~np.isin(lr, top))[:, None].astype(np.float64))
            fs.append((~np.isin(ls, top))[:, None].astype(np.float64))
    if not fr:
        return np.zeros((len(real), 0)), np.zeros((len(syn), 0))
    return np.hstack(fr), np.hstack(fs)


def _folds(X: np.ndarray, y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Fold id per row; identical feature vectors share a fold.

    Otherwise a row in a test fold has its exact twin with the opposite label in
    training, and a copied table would score below chance.  Groups are dealt
    round-robin per class (by the class of their first row) to keep folds balanced.
    """
    key = np.where(np.isnan(X), np.inf, X)
    _, group = np.unique(key, axis=0, return_inverse=True)
    group = group.reshape(-1)
    n_groups = group.max() + 1
    first = np.full(n_groups, len(y))
    np.minimum.at(first, group, np.arange(len(y)))
    gfold = np.empty(n_groups, dtype=np.int64)
    for label in (0, 1):
        g = np.nonzero(y[first] == label)[0]
        g = g[rng.permutation(len(g))]
        gfold[g] = np.arange(len(g)) % k
    return gfold[group]


def c2st_features(Xr: np.ndarray, Xs: np.ndarray, cfg: C2STConfig | None = None, seed: int = 0) -> float:
    """Cross-validated accuracy of telling real (0) from synthetic (1) rows; 0.5 is ideal."""
    cfg = cfg or C2STConfig()
    rng = np.random.default_rng(seed)
    n = min(len(Xr), len(Xs))
    if cfg.max_rows is not None:
        n = min(n, cfg.max_rows)
    if n < MIN_ROWS:
        raise ValueError(f"c2st needs at least {MIN_ROWS} rows per side (got {len(Xr)} and {len(Xs)})")
    # equal class sizes so that chance level is exactly 0.5
    Xr = Xr[np.sort(rng.choice(len(Xr), n, replace=False))]
    Xs = Xs[np.sort(rng.choice(len(Xs), n, replace=False))]
    X = np.vstack([Xr, Xs])
    y = np.r_[np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)]
    if X.shape[1] == 0:
        return 0.5
    fold = _folds(X, y, cfg.folds, rng)
    correct = 0
    for k in range(cfg.folds):
        test = fold == k
        clf = cfg.classifier() if cfg.classifier is not None else GBDTClassifier(cfg.gbdt)
        clf.fit(X[~test], y[~test])
        correct += int(np.sum(np.asarray(clf.predict(X[test])) == y[test]))
    return correct / len(y)


def c2st(real: pd.DataFrame, syn: pd.DataFrame, cfg: C2STConfig | None = None, seed: int = 0) -> float:
    cfg = cfg or C2STConfig()
    Xr, Xs = feature_matrix(real, syn, cfg.max_categories)
    return c2st_features(Xr, Xs, cfg, seed)


def aggregate_children(db: Database, parent: str) -> pd.DataFrame:
    """Parent attributes plus, per child relation: child count, numeric means, categorical distinct counts.

    Means over zero children are missing (NaN), which the discriminator treats as its own bin.
    """
    schema = db.schema
    out = attribute_frame(db, parent).copy()
    pk = db.tables[parent][schema[parent].primary_key].to_numpy(dtype=object)
    index = pd.Index(pk)
    n = len(pk)
    for lk in schema.children_of(parent):
        child = attribute_frame(db, lk.child)
        pidx = index.get_indexer(db.tables[lk.child][lk.column].to_numpy(dtype=object))
        keep = pidx >= 0
        out[f"{lk.name}:count"] = np.bincount(pidx[keep], minlength=n).astype(np.float64)
        for c, kind in column_kinds(child).items():
            if kind == "num":
                v = _as_float(child[c])
                ok = keep & ~np.isnan(v)
                s = np.bincount(pidx[ok], weights=v[ok], minlength=n)
                k = np.bincount(pidx[ok], minlength=n)
                with np.errstate(invalid="ignore", divide="ignore"):
                    out[f"{lk.name}:mean:{c}"] = np.where(k > 0, s / np.maximum(k, 1), np.nan)
            else:
                labels = _labels(child[c])
                pairs = pd.DataFrame({"p": pidx[keep], "v": labels[keep]}).drop_duplicates()
                out[f"{lk.name}:distinct:{c}"] = np.bincount(pairs["p"].to_numpy(dtype=np.int64),
                                                             minlength=n).astype(np.float64)
    return out


def c2st_agg(real: Database, syn: Database, cfg: C2STConfig | None = None, seed: int = 0) -> dict[str, float]:
    """C2ST on every parent table after appending child aggregates."""
    out = {}
    for t in real.schema.tables:
        if not real.schema.children_of(t.name) or t.dimension:
            continue
        out[t.name] = c2st(aggregate_children(real, t.name), aggregate_children(syn, t.name), cfg, seed)
    return out
