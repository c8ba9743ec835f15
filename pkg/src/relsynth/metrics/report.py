"""Full evaluation of a synthetic database against the real one (report layout in docs/eval_report.md)."""
from __future__ import annotations

import logging

import numpy as np

from ..database import Database
from ..graph import attribute_frame
from .c2st import MIN_ROWS, C2STConfig, aggregate_children, c2st
from .dcr import dcr_score
from .stats import cardinality_similarity, column_kinds, fk_paths, khop_trend, shape_score, trend_score

log = logging.getLogger(__name__)

REPORT_VERSION = 1


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None and not np.isnan(v)]
    return float(np.mean(vals)) if vals else None


def _clean(x):
    if isinstance(x, float) and np.isnan(x):
        return None
    return x


def evaluate(real: Database, syn: Database, holdout: Database | None = None, max_hops: int = 2,
             c2st_cfg: C2STConfig | None = None, seed: int = 0) -> dict:
    """All scores in [0, 1]; entries that cannot be computed are null."""
    if real.schema.fingerprint() != syn.schema.fingerprint():
        raise ValueError("real and synthetic databases have different schemas")
    tables = {}
    for spec in real.schema.tables:
        if spec.dimension:
            continue
        fr, fs = attribute_frame(real, spec.name), attribute_frame(syn, spec.name)
        entry = {"rows_real": len(fr), "rows_syn": len(fs), "shape": None, "trend": None, "c2st": None,
                 "c2st_agg": None, "dcr": None}
        if len(fr) and len(fs) and fr.shape[1]:
            entry["shape"] = _clean(shape_score(fr, fs)["score"])
        if fr.shape[1] >= 2 and len(fr) and len(fs):
            entry["trend"] = _clean(trend_score(fr, fs)["score"])
        if min(len(fr), len(fs)) >= MIN_ROWS and fr.shape[1]:
            entry["c2st"] = c2st(fr, fs, c2st_cfg, seed)
        if real.schema.children_of(spec.name) and min(len(fr), len(fs)) >= MIN_ROWS:
            entry["c2st_agg"] = c2st(aggregate_children(real, spec.name), aggregate_children(syn, spec.name),
                                     c2st_cfg, seed)
        if holdout is not None and fr.shape[1]:
            fh = attribute_frame(holdout, spec.name)
            if len(fh) and len(fs):
                entry["dcr"] = dcr_score(fs, fr, fh)
        tables[spec.name] = entry
    khop = {}
    for k in range(1, max_hops + 1):
        try:
            fk_paths(real.schema, k)
        except ValueError:
            break
        res = khop_trend(real, syn, k, seed)
        khop[str(k)] = {"score": _clean(res["score"]), "paths": res["paths"]}
    card = cardinality_similarity(real, syn)
    summary = {
        "shape": _mean(t["shape"] for t in tables.values()),
        "trend": _mean(t["trend"] for t in tables.values()),
        "c2st": _mean(t["c2st"] for t in tables.values()),
        "c2st_agg": _mean(t["c2st_agg"] for t in tables.values()),
        "cardinality": _clean(card["score"]),
        "dcr": _mean(t["dcr"] for t in tables.values()),
    }
    for k, v in khop.items():
        summary[f"khop_{k}"] = v["score"]
    return {
        "version": REPORT_VERSION,
        "summary": summary,
        "tables": tables,
        "cardinality": card["relations"],
        "khop": khop,
        "columns": {t.name: column_kinds(attribute_frame(real, t.name)) for t in real.schema.tables
                    if not t.dimension},
    }


def scale_report(report: dict, factor: float = 100.0) -> dict:
    """Multiply every score by ``factor`` (row counts and metadata untouched)."""
    skip = {"version", "rows_real", "rows_syn", "columns", "scale"}

    def walk(x, key=None):
        if key in skip:
            return x
        if isinstance(x, dict):
            return {k: walk(v, k) for k, v in x.items()}
        if isinstance(x, float):
            return x * factor
        return x

    out = walk(report)
    out["scale"] = factor
    return out
