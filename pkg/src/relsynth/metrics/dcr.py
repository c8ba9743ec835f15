"""Distance-to-closest-record privacy score."""
from __future__ import annotations

import warnings

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .stats import _as_float, _labels, column_kinds


def embed(frames: list[pd.DataFrame], reference: pd.DataFrame) -> list[np.ndarray]:
    """Standardized numerics (missing -> 0 plus an indicator) and one-hot categoricals."""
    kinds = column_kinds(reference)
    out = [[] for _ in frames]
    for c, kind in kinds.items():
        if kind == "num":
            ref = _as_float(reference[c])
            mu, sd = np.nanmean(ref), np.nanstd(ref)
            sd = sd if sd > 0 else 1.0
            for i, f in enumerate(frames):
                v = (_as_float(f[c]) - mu) / sd
                miss = np.isnan(v)
                out[i].append(np.where(miss, 0.0, v)[:, None])
                if np.isnan(ref).any():
                    out[i].append(miss[:, None].astype(np.float64))
        else:
            cats = np.unique(np.concatenate([_labels(f[c]) for f in frames]))
            for i, f in enumerate(frames):
                out[i].append((_labels(f[c])[:, None] == cats[None, :]).astype(np.float64))
    return [np.hstack(o) if o else np.zeros((len(f), 0)) for o, f in zip(out, frames)]


def dcr_score(syn: pd.DataFrame, train: pd.DataFrame, holdout: pd.DataFrame) -> float:
    """Share of synthetic rows closer (l2) to the training set than to the holdout; ties count 1/2."""
    if len(syn) == 0 or len(train) == 0 or len(holdout) == 0:
        raise ValueError("dcr needs non-empty synthetic, training and holdout sets")
    if len(train) != len(holdout):
        warnings.warn(f"dcr: training ({len(train)}) and holdout ({len(holdout)}) sizes differ", stacklevel=2)
    S, Tr, Ho = embed([syn, train, holdout], train)
    d_trn = cKDTree(Tr).query(S, k=1)[0]
    d_hold = cKDTree(Ho).query(S, k=1)[0]
    ind = np.where(d_trn < d_hold, 1.0, np.where(d_trn == d_hold, 0.5, 0.0))
    return float(ind.mean())
