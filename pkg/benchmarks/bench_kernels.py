"""Compiled vs pure-Python kernels on the three hot loops.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Each workload runs once per backend with identical inputs. The script checks that both
backends produce identical results before it reports any timing.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from relsynth import _pykernels
from relsynth.datasets import planted_partition
from relsynth.graph import build_entity_graph, m2m_transform
from relsynth.metrics.gbdt import GBDTClassifier, GBDTConfig
from relsynth.structgen import BlockEdgeMatrix, RelationDegrees, infer_partition, rewire_to_simple, sample_edge_set
from relsynth.structgen.blockmodel import sbm_graph

try:
    from relsynth import _ckernels
except ImportError:
    _ckernels = None


def workload_sweeps(kernels):
    db, _ = planted_partition(block_size=60, n_blocks=4, p_in=0.15, p_out=0.01, seed=1)
    g, _ = m2m_transform(build_entity_graph(db))
    part = infer_partition(sbm_graph(g), rng=np.random.default_rng(0), kernels=kernels)
    return part.b.tobytes()


def workload_rewire(kernels):
    rng = np.random.default_rng(0)
    n, m = 3000, 60000
    deg = rng.multinomial(m, np.full(n, 1 / n))
    indeg = rng.multinomial(m, np.full(n, 1 / n))
    degrees = RelationDegrees(deg, indeg)
    b0 = rng.integers(0, 4, n)
    b1 = rng.integers(0, 4, n)
    src = np.repeat(np.arange(n), deg)
    dst = np.repeat(np.arange(n), indeg)[rng.permutation(m)]
    e = BlockEdgeMatrix.from_edges(src, dst, b0, b1)
    s, d = sample_edge_set(degrees, e, np.random.default_rng(1))
    s, d = rewire_to_simple(s, d, e, False, np.random.default_rng(2), kernels=kernels)
    return s.tobytes() + d.tobytes()


def workload_gbdt(kernels):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4000, 6))
    y = (X[:, 0] + 0.5 * rng.normal(size=4000) > 0).astype(np.int64)
    clf = GBDTClassifier(GBDTConfig(rounds=50), kernels=kernels).fit(X, y)
    return clf.decision_function(X).tobytes()


WORKLOADS = {"sbm_sweep": workload_sweeps, "rewire_simple": workload_rewire, "gbdt_histogram": workload_gbdt}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available", file=sys.stderr)
    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    rows = []
    for name, fn in WORKLOADS.items():
        times, outputs = {}, {}
        for bname, mod in backends.items():
            best = float("inf")
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                outputs[bname] = fn(mod)
                best = min(best, time.perf_counter() - t0)
            times[bname] = best
        same = len(set(outputs.values())) == 1
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        row = {"workload": name, **{f"{b}_s": round(t, 4) for b, t in times.items()}}
        if "cython" in times:
            row["speedup"] = round(times["python"] / times["cython"], 2)
        rows.append(row)
        print("  ".join(f"{k}={v}" for k, v in row.items()))
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=2)


if __name__ == "__main__":
    main()
