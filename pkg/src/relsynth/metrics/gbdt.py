"""Histogram gradient-boosted trees with logistic loss, used as the C2ST discriminator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels as _kernels

MISSING_BIN = 255


@dataclass
class GBDTConfig:
    rounds: int = 200
    depth: int = 3
    learning_rate: float = 0.1
    l2: float = 1.0
    min_child_weight: float = 1.0
    max_bins: int = 255


class Binner:
    """Per-feature cut points: distinct values when few, else quantiles.  NaN maps to its own bin."""

    def __init__(self, max_bins: int = 255):
        self.max_bins = min(max_bins, MISSING_BIN)
        self.cuts: list[np.ndarray] = []

    def fit(self, X: np.ndarray) -> Binner:
        self.cuts = []
        for f in range(X.shape[1]):
            v = X[:, f]
            v = v[~np.isnan(v)]
            u = np.unique(v)
            if len(u) <= self.max_bins:
                cuts = (u[:-1] + u[1:]) / 2 if len(u) > 1 else np.zeros(0)
            else:
                cuts = np.unique(np.quantile(v, np.linspace(0, 1, self.max_bins + 1)[1:-1]))
            self.cuts.append(cuts)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.uint8)
        for f, cuts in enumerate(self.cuts):
            col = X[:, f]
            codes = np.searchsorted(cuts, col, side="right")
            codes[np.isnan(col)] = MISSING_BIN
            out[:, f] = codes
        return out


@dataclass
class _Tree:
    feature: np.ndarray
    split: np.ndarray  # rows with bin <= split go left
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, B: np.ndarray) -> np.ndarray:
        node = np.zeros(len(B), dtype=np.int64)
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return self.value[node]
            idx = np.nonzero(inner)[0]
            f = self.feature[node[idx]]
            go_left = B[idx, f] <= self.split[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])


class GBDTClassifier:
    """Binary classifier; ``fit`` takes float features (NaN allowed) and 0/1 labels."""

    def __init__(self, cfg: GBDTConfig | None = None, kernels=None):
        self.cfg = cfg or GBDTConfig()
        self.kernels = kernels or _kernels
        self.trees: list[_Tree] = []
        self.base = 0.0

    def _grow(self, B, grad, hess) -> _Tree:
        cfg = self.cfg
        nbins = MISSING_BIN + 1
        feature, split, left, right, value = [], [], [], [], []

        def new_node():
            for lst, v in ((feature, -1), (split, 0), (left, -1), (right, -1), (value, 0.0)):
                lst.append(v)
            return len(feature) - 1

        stack = [(new_node(), np.arange(len(B), dtype=np.int64), 0)]
        while stack:
            node, rows, depth = stack.pop()
            G, H = grad[rows].sum(), hess[rows].sum()
            value[node] = -cfg.learning_rate * G / (H + cfg.l2)
            if depth >= cfg.depth or len(rows) < 2:
                continue
            hist = self.kernels.gbdt_histogram(B, grad, hess, rows, nbins)
            gl = np.cumsum(hist[:, :, 0], axis=1)[:, :-1]
            hl = np.cumsum(hist[:, :, 1], axis=1)[:, :-1]
            gr, hr = G - gl, H - hl
            ok = (hl >= cfg.min_child_weight) & (hr >= cfg.min_child_weight)
            gain = gl ** 2 / (hl + cfg.l2) + gr ** 2 / (hr + cfg.l2) - G ** 2 / (H + cfg.l2)
            gain = np.where(ok, gain, -np.inf)
            f, s = np.unravel_index(int(np.argmax(gain)), gain.shape)
            if not np.isfinite(gain[f, s]) or gain[f, s] <= 1e-12:
                continue
            mask = B[rows, f] <= s
            feature[node], split[node] = int(f), int(s)
            lnode, rnode = new_node(), new_node()
            left[node], right[node] = lnode, rnode
            stack.append((lnode, rows[mask], depth + 1))
            stack.append((rnode, rows[~mask], depth + 1))
        return _Tree(np.array(feature), np.array(split), np.array(left), np.array(right), np.array(value))

    def fit(self, X: np.ndarray, y: np.ndarray) -> GBDTClassifier:
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.binner = Binner(self.cfg.max_bins).fit(X)
        B = np.ascontiguousarray(self.binner.transform(X))
        p0 = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        self.base = float(np.log(p0 / (1 - p0)))
        F = np.full(len(y), self.base)
        self.trees = []
        for _ in range(self.cfg.rounds):
            p = 1.0 / (1.0 + np.exp(-F))
            grad, hess = p - y, np.maximum(p * (1 - p), 1e-12)
            tree = self._grow(B, grad, hess)
            self.trees.append(tree)
            F += tree.predict(B)
        return self

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        B = self.binner.transform(np.asarray(X, dtype=np.float64))
        F = np.full(len(B), self.base)
        for t in self.trees:
            F += t.predict(B)
        return F

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision_function(X)))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)
