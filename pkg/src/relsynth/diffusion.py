"""Hybrid diffusion over mixed attributes: Gaussian noise on numerics, absorbing-mask noise on categoricals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor, log_softmax, mul, square, tsum


@dataclass(frozen=True)
class NoiseSchedule:
    sigma_min: float = 0.002
    sigma_max: float = 80.0
    delta: float = 1e-3
    lambda_cat: float = 1.0

    def clamp(self, t):
        return np.clip(t, self.delta, 1.0)

    def sigma(self, t):
        """Log-linear noise level: sigma_min at t=0, sigma_max at t=1."""
        t = np.asarray(t, dtype=np.float64)
        return self.sigma_min ** (1.0 - t) * self.sigma_max ** t

    def alpha(self, t):
        """Probability that a categorical entry is still unmasked at time t."""
        return 1.0 - np.asarray(t, dtype=np.float64)

    def sigma_cat(self, t):
        return -np.log1p(-np.asarray(t, dtype=np.float64))

    def cat_weight(self, t) -> float:
        """alpha'_t / (alpha_t - 1), which is 1/t for alpha_t = 1 - t."""
        return 1.0 / float(self.clamp(t))

    def lambda_num(self, step: int, horizon: int) -> float:
        """Linear decay from 1 at step 0 to 0 at ``horizon``."""
        if horizon <= 0:
            return 0.0
        return float(max(0.0, 1.0 - step / horizon))

    def time_grid(self, steps: int = 100, rho: float = 7.0) -> np.ndarray:
        """Decreasing times from 1 to delta, evenly spaced in sigma^(1/rho)."""
        s_hi, s_lo = self.sigma(1.0) ** (1 / rho), self.sigma(self.delta) ** (1 / rho)
        sig = (s_hi + np.linspace(0.0, 1.0, steps) * (s_lo - s_hi)) ** rho
        t = np.log(sig / self.sigma_min) / np.log(self.sigma_max / self.sigma_min)
        t[0], t[-1] = 1.0, self.delta
        return t


def forward_num(z0: np.ndarray, t: float, schedule: NoiseSchedule, rng: np.random.Generator):
    eps = rng.standard_normal(np.shape(z0))
    return z0 + schedule.sigma(t) * eps, eps


def forward_cat(c0: np.ndarray, t: float, mask_index, schedule: NoiseSchedule, rng: np.random.Generator):
    """Mask each entry independently with probability 1 - alpha_t.

    ``mask_index`` is a scalar or one index per column (the column's vocabulary size).
    """
    c0 = np.asarray(c0, dtype=np.int64)
    masked = rng.random(c0.shape) >= schedule.alpha(t)
    mask_index = np.broadcast_to(np.asarray(mask_index, dtype=np.int64), c0.shape)
    return np.where(masked, mask_index, c0), masked


def reverse_cat_step(c_t: np.ndarray, mask_index: int, alpha_t: float, alpha_s: float, probs: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """One ancestral step of the absorbing-state chain for a single column.

    Unmasked entries are carried over.  A masked entry stays masked with
    probability (1-alpha_s)/(1-alpha_t) and otherwise takes category j with
    probability proportional to ``probs[:, j]``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < -1e-12) or not np.allclose(probs.sum(-1), 1.0, atol=1e-6):
        raise ValueError("probs must lie on the probability simplex")
    c_t = np.asarray(c_t, dtype=np.int64)
    out = c_t.copy()
    masked = np.nonzero(c_t == mask_index)[0]
    if len(masked) == 0:
        return out
    p_stay = (1.0 - alpha_s) / (1.0 - alpha_t) if alpha_t < 1.0 else 0.0
    u = rng.random(len(masked))
    unmask = u >= p_stay
    rows = masked[unmask]
    if len(rows):
        p = probs if probs.ndim == 1 else probs[rows]
        p = np.broadcast_to(p, (len(rows), probs.shape[-1]))
        cdf = np.cumsum(p, axis=1)
        cdf /= cdf[:, -1:]
        draw = rng.random(len(rows))
        out[rows] = np.minimum((cdf < draw[:, None]).sum(1), probs.shape[-1] - 1)
    return out


def reverse_num_step(z_t: np.ndarray, sigma_t: float, sigma_s: float, eps_pred, rng: np.random.Generator | None = None,
                     churn: float = 0.0, sigma_max: float | None = None):
    """Euler step of the probability-flow ODE with optional noise injection first.

    ``eps_pred`` is either an array (evaluated at ``sigma_t``) or a callable
    ``f(z, sigma)`` so the prediction can be made at the raised noise level.
    """
    sigma_hat = sigma_t
    z = np.asarray(z_t, dtype=np.float64)
    if churn > 0.0:
        sigma_hat = sigma_t * (1.0 + churn)
        if sigma_max is not None:
            sigma_hat = min(sigma_hat, sigma_max)
        extra = np.sqrt(max(sigma_hat ** 2 - sigma_t ** 2, 0.0))
        z = z + extra * rng.standard_normal(z.shape)
    eps = eps_pred(z, sigma_hat) if callable(eps_pred) else eps_pred
    return z - (sigma_hat - sigma_s) * eps


class TimestepSampler:
    """Stratified times: every window of ``n`` consecutive draws hits each of ``n`` equal strata once.

    Step k uses stratum ``perm[k mod n]`` of one fixed random permutation, so a
    window that wraps around still covers every stratum, and jitters uniformly
    inside it.
    """

    def __init__(self, rng: np.random.Generator, n: int = 64, schedule: NoiseSchedule | None = None):
        self.rng = rng
        self.n = n
        self.schedule = schedule or NoiseSchedule()
        self.perm = rng.permutation(n)

    def __call__(self, k: int) -> float:
        u = (self.perm[k % self.n] + self.rng.random()) / self.n
        d = self.schedule.delta
        return float(d + (1.0 - d) * u)


def numeric_loss(eps_pred: Tensor, eps: np.ndarray) -> Tensor:
    """Mean squared error over all numeric entries."""
    diff = eps_pred - as_tensor(eps)
    return mul(tsum(square(diff)), 1.0 / max(diff.data.size, 1))


def categorical_loss(logits: Tensor, c0: np.ndarray, masked: np.ndarray, weight: float) -> Tensor:
    """Weighted cross-entropy on masked entries, averaged over all entries of the column block."""
    logp = log_softmax(logits)
    picked = logp[np.arange(len(c0)), np.asarray(c0, dtype=np.int64)]
    sel = np.asarray(masked, dtype=np.float64)
    return mul(tsum(mul(picked, sel)), -weight)


def joint_loss(preds: dict, targets: dict, t: float, lambda_num: float,
               schedule: NoiseSchedule | None = None) -> Tensor:
    """Sum over tables of lambda_num * MSE(eps) + lambda_cat * w(t) * masked cross-entropy.

    ``preds[table] = (eps_pred Tensor (n, M) or None, [logits Tensor (n, K_j)])``;
    ``targets[table] = (eps (n, M) or None, c0 (n, C), masked (n, C))``.
    Each per-column cross-entropy sum is divided by n*C so both terms are means.
    """
    schedule = schedule or NoiseSchedule()
    w = schedule.cat_weight(t)
    total = None
    for name, (eps_pred, logits) in preds.items():
        eps, c0, masked = targets[name]
        parts = []
        if eps_pred is not None and eps_pred.data.size:
            if not np.all(np.isfinite(eps_pred.data)):
                raise FloatingPointError(f"non-finite numeric prediction in table {name}")
            parts.append(mul(numeric_loss(eps_pred, eps), lambda_num))
        if logits:
            n, C = c0.shape
            for j, lg in enumerate(logits):
                if not np.all(np.isfinite(lg.data)):
                    raise FloatingPointError(f"non-finite logits in table {name}")
                parts.append(mul(categorical_loss(lg, c0[:, j], masked[:, j], w),
                                 schedule.lambda_cat / max(n * C, 1)))
        for p in parts:
            total = p if total is None else total + p
    return total if total is not None else Tensor(0.0)
