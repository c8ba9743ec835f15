"""Training loop: subgraph batches, forward corruption, joint loss, AdamW, checkpoint selection."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import tensor as T
from .database import Database
from .denoiser import Denoiser, GraphBatch, HyperParams, full_batch, induced_batch, model_layout, \
    sibling_positions
from .diffusion import NoiseSchedule, TimestepSampler, forward_cat, joint_loss
from .encoders import EncodedTable, EncoderSet, MissingPolicy, fit_encoders
from .graph import EntityGraph, build_entity_graph

log = logging.getLogger(__name__)

MODES = ("auto", "full", "disjoint_components", "neighbor_sampling")


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    steps: int = 2000
    mode: str = "auto"  # auto picks disjoint components when the graph has several, else neighbour sampling
    subgraphs_per_batch: int = 32
    seed_nodes: int = 64  # neighbour mode: total seeds, split across tables by size
    hops: int = 2
    fanout: int = 10
    lambda_horizon: int | None = None  # defaults to steps
    checkpoint_every: int = 200
    ema: float = 0.9
    log_every: int = 50
    overfit: bool = False  # sanity mode: reuse the first batch, time and noise draw at every step

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: Denoiser
    encoders: EncoderSet
    checkpoints: list[tuple[int, float]] = field(default_factory=list)  # (step, smoothed loss)
    best_step: int = 0
    best_loss: float = float("inf")
    losses: list[float] = field(default_factory=list)


def components(graph: EntityGraph, tables: list[str]) -> tuple[int, dict[str, np.ndarray]]:
    """Weakly connected components over the structural relations; labels per table."""
    offsets, acc = {}, 0
    for t in tables:
        offsets[t] = acc
        acc += graph.node_counts[t]
    rows, cols = [], []
    for r in graph.structural():
        rows.append(r.src + offsets[r.side0])
        cols.append(r.dst + offsets[r.side1])
    if rows:
        rows, cols = np.concatenate(rows), np.concatenate(cols)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(acc, acc))
    n, labels = connected_components(adj, directed=True, connection="weak")
    return n, {t: labels[offsets[t]:offsets[t] + graph.node_counts[t]] for t in tables}


class SubgraphSampler:
    """Draws training batches from the entity graph."""

    def __init__(self, graph: EntityGraph, layout, cfg: TrainConfig, rng: np.random.Generator):
        self.graph = graph
        self.layout = layout
        self.cfg = cfg
        self.rng = rng
        self.tables = list(layout.tables)
        self.n_comp, self.comp = components(graph, self.tables)
        mode = cfg.mode
        if mode not in MODES:
            raise ValueError(f"unknown batch mode {mode!r}")
        if mode == "auto":
            mode = "disjoint_components" if self.n_comp > 1 else "neighbor_sampling"
        if mode == "disjoint_components" and self.n_comp <= 1:
            raise ValueError("disjoint_components mode needs more than one connected component")
        self.mode = mode
        self.positions = {t: sibling_positions(graph, t) for t, tl in layout.tables.items() if tl.ordered}
        if mode == "disjoint_components":
            self.members = {}
            for t in self.tables:
                order = np.argsort(self.comp[t], kind="stable")
                bounds = np.searchsorted(self.comp[t][order], np.arange(self.n_comp + 1))
                self.members[t] = (order, bounds)
        if mode == "neighbor_sampling":
            self._build_adjacency()
        if mode == "full":
            self._full = full_batch(graph, layout)

    def _build_adjacency(self):
        # neighbour lists per (table) over both edge directions, as CSR into (other table, row)
        self.nbrs = {t: [] for t in self.tables}
        for name, child, parent in self.layout.relations:
            rel = self.graph.relations[name]
            self.nbrs[child].append((parent, *_csr(rel.src, rel.dst, self.graph.node_counts[child])))
            self.nbrs[parent].append((child, *_csr(rel.dst, rel.src, self.graph.node_counts[parent])))

    def _neighbourhood(self) -> dict[str, np.ndarray]:
        cfg, rng = self.cfg, self.rng
        total = sum(self.graph.node_counts[t] for t in self.tables)
        chosen = {t: set() for t in self.tables}
        frontier = {}
        for t in self.tables:
            n = self.graph.node_counts[t]
            k = min(n, max(1, int(round(cfg.seed_nodes * n / max(total, 1))))) if n else 0
            frontier[t] = rng.choice(n, k, replace=False) if k else np.zeros(0, dtype=np.int64)
            chosen[t].update(frontier[t].tolist())
        for _ in range(cfg.hops):
            nxt = {t: [] for t in self.tables}
            for t, nodes in frontier.items():
                for other, ptr, idx in self.nbrs[t]:
                    for v in nodes:
                        nb = idx[ptr[v]:ptr[v + 1]]
                        if len(nb) > cfg.fanout:
                            nb = rng.choice(nb, cfg.fanout, replace=False)
                        nxt[other].extend(nb.tolist())
            frontier = {}
            for t in self.tables:
                new = [v for v in dict.fromkeys(nxt[t]) if v not in chosen[t]]
                chosen[t].update(new)
                frontier[t] = np.asarray(new, dtype=np.int64)
        return {t: np.fromiter(sorted(s), dtype=np.int64, count=len(s)) for t, s in chosen.items()}

    def sample(self) -> GraphBatch:
        if self.mode == "full":
            return self._full
        if self.mode == "disjoint_components":
            k = min(self.cfg.subgraphs_per_batch, self.n_comp)
            picked = self.rng.choice(self.n_comp, k, replace=False)
            rows = {}
            for t in self.tables:
                order, bounds = self.members[t]
                rows[t] = np.concatenate([order[bounds[c]:bounds[c + 1]] for c in picked]) if len(order) \
                    else np.zeros(0, dtype=np.int64)
            return induced_batch(self.graph, self.layout, rows, self.positions)
        return induced_batch(self.graph, self.layout, self._neighbourhood(), self.positions)


def _csr(src, dst, n):
    order = np.argsort(src, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
    return ptr, dst[order]


def corrupt(encoded: dict[str, EncodedTable], batch: GraphBatch, layout, t: float, schedule: NoiseSchedule,
            rng: np.random.Generator):
    """Noisy inputs and regression targets for every table of a batch."""
    z, c, targets = {}, {}, {}
    sigma = float(schedule.sigma(t))
    for name, tl in layout.tables.items():
        rows = batch.rows[name]
        enc = encoded[name]
        z0 = enc.num[rows]
        eps = rng.standard_normal(z0.shape)
        z[name] = z0 + sigma * eps
        c0 = enc.cat[rows]
        c[name], masked = forward_cat(c0, t, np.asarray(tl.cat_sizes, dtype=np.int64), schedule, rng)
        targets[name] = (eps, c0, masked)
    return z, c, targets


def train(db: Database, hp: HyperParams | None = None, cfg: TrainConfig | None = None,
          rngs: dict[str, np.random.Generator] | None = None, encoders: EncoderSet | None = None,
          policy: MissingPolicy | None = None, schedule: NoiseSchedule | None = None,
          progress: IO[str] | None = None) -> TrainResult:
    """Fit a denoiser; returns the parameters of the checkpoint with the lowest smoothed loss.

    ``rngs`` supplies the ``init`` and ``training`` generators (fresh default ones otherwise).
    """
    hp = hp or HyperParams()
    cfg = cfg or TrainConfig()
    schedule = schedule or NoiseSchedule()
    rngs = rngs or {}
    init_rng = rngs.get("init", np.random.default_rng(1))
    rng = rngs.get("training", np.random.default_rng(2))
    encoders = encoders or fit_encoders(db, policy)
    graph = build_entity_graph(db)
    layout = model_layout(encoders, graph)
    model = Denoiser(layout, hp, init_rng)
    encoded = encoders.encode(db)
    sampler = SubgraphSampler(graph, layout, cfg, rng)
    times = TimestepSampler(rng, 64, schedule)
    params = model.parameters()
    opt = T.AdamW(params, lr=hp.lr, weight_decay=hp.weight_decay)
    horizon = cfg.lambda_horizon or cfg.steps
    result = TrainResult(model, encoders)
    ema = None
    best = None
    fixed = None
    for step in range(cfg.steps):
        if fixed is None:
            batch = sampler.sample()
            t = times(step)
            z, c, targets = corrupt(encoded, batch, layout, t, schedule, rng)
            if cfg.overfit:
                fixed = (batch, t, z, c, targets)
        else:
            batch, t, z, c, targets = fixed
        lam = schedule.lambda_num(step, horizon)
        preds = model.forward(batch, z, c, float(schedule.sigma(t)), t)
        loss = joint_loss(preds, targets, t, lam, schedule)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"loss became {value} at step {step} (t={t:.4f}, lambda_num={lam:.3f})")
        T.backward(loss, params)
        opt.step()
        if not all(np.all(np.isfinite(p.data)) for p in params):
            raise TrainingDiverged(f"non-finite parameters after step {step}")
        result.losses.append(value)
        ema = value if ema is None else cfg.ema * ema + (1 - cfg.ema) * value
        if progress is not None and (step % cfg.log_every == 0 or step == cfg.steps - 1):
            progress.write(json.dumps({"step": step, "loss": round(value, 6), "lambda_num": round(lam, 6)},
                                      sort_keys=True) + "\n")
        if (step + 1) % cfg.checkpoint_every == 0 or step == cfg.steps - 1:
            result.checkpoints.append((step + 1, ema))
            if best is None or ema <= result.best_loss:
                result.best_loss, result.best_step = ema, step + 1
                best = {k: p.data.copy() for k, p in model.params.items()}
    if best is not None:
        for k, p in model.params.items():
            p.data = best[k]
    log.info("trained %d steps, best checkpoint at step %d (loss %.4f)", cfg.steps, result.best_step,
             result.best_loss)
    return result
