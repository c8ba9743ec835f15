"""End-to-end generation: structure, joint reverse diffusion over every table, decoding, assembly."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .database import Database
from .denoiser import Denoiser, GraphBatch, full_batch, induced_batch, sibling_positions
from .diffusion import NoiseSchedule, reverse_cat_step
from .encoders import EncodedTable, EncoderSet
from .graph import EntityGraph, assemble_database, build_entity_graph, dimension_frames
from .structgen import StructureConfig, run_structure

log = logging.getLogger(__name__)

STRUCTURE_MODES = ("generated", "original")


class SynthesisError(RuntimeError):
    pass


@dataclass
class SampleConfig:
    structure: str = "generated"
    steps: int | None = None  # defaults to the model's sampling_steps
    churn: float | None = None  # defaults to the model's churn
    node_budget: int | None = None  # above this, denoise in connected-component chunks


def sampling_times(schedule: NoiseSchedule, steps: int) -> np.ndarray:
    """The decreasing grid from 1 to delta plus a final 0 (the clean endpoint)."""
    return np.r_[schedule.time_grid(steps), 0.0]


def _sigma(schedule: NoiseSchedule, t: float) -> float:
    return 0.0 if t <= 0.0 else float(schedule.sigma(t))


def _time_of_sigma(schedule: NoiseSchedule, sigma: float) -> float:
    return float(np.log(sigma / schedule.sigma_min) / np.log(schedule.sigma_max / schedule.sigma_min))


def chunk_batches(graph: EntityGraph, model: Denoiser, budget: int | None) -> list[GraphBatch]:
    """The whole graph as one batch, or groups of whole components of at most ``budget`` nodes.

    A component larger than the budget is cut into consecutive row ranges; edges between
    pieces are then dropped, so that case is an approximation.
    """
    layout = model.layout
    total = sum(graph.node_counts[t] for t in layout.tables)
    if budget is None or total <= budget:
        return [full_batch(graph, layout)]
    from .trainer import components
    tables = list(layout.tables)
    n_comp, comp = components(graph, tables)
    sizes = np.zeros(n_comp, dtype=np.int64)
    for t in tables:
        sizes += np.bincount(comp[t], minlength=n_comp)
    groups, cur, acc = [], [], 0
    for c in range(n_comp):
        if cur and acc + sizes[c] > budget:
            groups.append(cur)
            cur, acc = [], 0
        cur.append(c)
        acc += sizes[c]
    if cur:
        groups.append(cur)
    positions = {t: sibling_positions(graph, t) for t, tl in layout.tables.items() if tl.ordered}
    batches = []
    for g in groups:
        gset = np.zeros(n_comp, dtype=bool)
        gset[g] = True
        rows = {t: np.nonzero(gset[comp[t]])[0] for t in tables}
        n = sum(len(r) for r in rows.values())
        if n <= budget:
            batches.append(induced_batch(graph, layout, rows, positions))
            continue
        log.warning("component of %d nodes exceeds the node budget %d; splitting it", n, budget)
        flat = [(t, i) for t in tables for i in rows[t]]
        for s in range(0, len(flat), budget):
            piece = flat[s:s + budget]
            sub = {t: np.array([i for tt, i in piece if tt == t], dtype=np.int64) for t in tables}
            batches.append(induced_batch(graph, layout, sub, positions))
    return batches


def denoise(model: Denoiser, batches: list[GraphBatch], counts: dict[str, int], rng: np.random.Generator,
            schedule: NoiseSchedule | None = None, steps: int | None = None,
            churn: float | None = None) -> dict[str, EncodedTable]:
    """Run the reverse process jointly over all tables and return clean encoded attributes."""
    schedule = schedule or NoiseSchedule()
    hp = model.hp
    steps = steps or hp.sampling_steps
    churn = hp.churn if churn is None else churn
    layout = model.layout
    z = {t: schedule.sigma_max * rng.standard_normal((counts[t], tl.n_num)) for t, tl in layout.tables.items()}
    c = {t: np.tile(np.asarray(tl.cat_sizes, dtype=np.int64), (counts[t], 1)) for t, tl in layout.tables.items()}
    times = sampling_times(schedule, steps)
    for i in range(steps):
        t_cur, t_next = times[i], times[i + 1]
        s_cur, s_next = _sigma(schedule, t_cur), _sigma(schedule, t_next)
        gamma = churn if i < steps - hp.churn_off_last else 0.0
        s_hat = min(s_cur * (1.0 + gamma), schedule.sigma_max)
        if s_hat > s_cur:
            extra = np.sqrt(s_hat ** 2 - s_cur ** 2)
            for t in z:
                z[t] = z[t] + extra * rng.standard_normal(z[t].shape)
        t_hat = _time_of_sigma(schedule, s_hat)
        a_cur, a_next = float(schedule.alpha(t_cur)), float(schedule.alpha(t_next))
        eps = {t: np.zeros_like(z[t]) for t in z}
        probs = {t: [None] * len(tl.cat_sizes) for t, tl in layout.tables.items()}
        for b in batches:
            zb = {t: z[t][b.rows[t]] for t in z}
            cb = {t: c[t][b.rows[t]] for t in c}
            out = model.forward(b, zb, cb, s_hat, t_hat)
            for t, (e, logits) in out.items():
                if e is not None:
                    eps[t][b.rows[t]] = e.data
                for j, lg in enumerate(logits):
                    if probs[t][j] is None:
                        probs[t][j] = np.zeros((counts[t], lg.data.shape[1]))
                    probs[t][j][b.rows[t]] = T.softmax(lg).data
        for t, tl in layout.tables.items():
            if tl.n_num:
                z[t] = z[t] - (s_hat - s_next) * eps[t]
            for j, k in enumerate(tl.cat_sizes):
                if counts[t]:
                    c[t][:, j] = reverse_cat_step(c[t][:, j], k, a_cur, a_next, probs[t][j], rng)
    for t, tl in layout.tables.items():
        if np.any(c[t] >= np.asarray(tl.cat_sizes, dtype=np.int64)):
            raise SynthesisError(f"table {t}: masked entries left after the final step")
        if not np.all(np.isfinite(z[t])):
            raise SynthesisError(f"table {t}: non-finite numeric output")
    return {t: EncodedTable(z[t], c[t]) for t in layout.tables}


def synthesize(model: Denoiser, encoders: EncoderSet, reference: Database, rngs: dict[str, np.random.Generator],
               cfg: SampleConfig | None = None, structure_cfg: StructureConfig | None = None,
               schedule: NoiseSchedule | None = None) -> Database:
    """Generate a database with the reference's schema and row counts.

    ``rngs`` holds the ``structure`` and ``sampling`` generators.
    """
    cfg = cfg or SampleConfig()
    if cfg.structure not in STRUCTURE_MODES:
        raise ValueError(f"structure mode must be one of {STRUCTURE_MODES}, got {cfg.structure!r}")
    graph = build_entity_graph(reference)
    if cfg.structure == "generated":
        graph = run_structure(graph, structure_cfg, rngs["structure"]).graph
    counts = {t: graph.node_counts[t] for t in model.layout.tables}
    batches = chunk_batches(graph, model, cfg.node_budget)
    encoded = denoise(model, batches, counts, rngs["sampling"], schedule, cfg.steps, cfg.churn)
    attrs = encoders.decode(encoded)
    attrs.update(dimension_frames(reference))
    return assemble_database(graph, attrs, reference.schema)
