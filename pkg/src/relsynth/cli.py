"""Command-line entry point: fit, sample, structure, eval, roundtrip-check."""
from __future__ import annotations

import argparse
import io
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import Checkpoint, file_hash, load, save
from .config import ConfigError, RunConfig, defaults_text, load_config
from .database import Database, load_database
from .graph import build_entity_graph, roundtrip_check
from .kernels import BACKEND_NAME
from .rng import streams
from .schema import load_schema

log = logging.getLogger("relsynth")

THREADS_ENV = "RELDIFF_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _versions() -> dict:
    import pandas
    import scipy
    return {"relsynth": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pandas.__version__, "kernels": BACKEND_NAME}


def _manifest(command: str, cfg: RunConfig, **extra) -> dict:
    return {"command": command, "seed": cfg.seed, "config_sha256": cfg.digest(), "config": cfg.to_dict(),
            "versions": _versions(), **extra}


def _load_db(schema_path, data_dir) -> Database:
    return load_database(load_schema(schema_path), data_dir)


def cmd_fit(args) -> dict:
    from .trainer import train
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    db = _load_db(args.schema, args.data)
    rngs = streams(cfg.seed)
    progress = None
    if args.log:
        Path(args.log).parent.mkdir(parents=True, exist_ok=True)
        progress = open(args.log, "w", encoding="utf-8")
    try:
        result = train(db, cfg.model, cfg.train, rngs, policy=cfg.policy, progress=progress)
    finally:
        if progress:
            progress.close()
    meta = {"seed": cfg.seed, "train": cfg.train.to_dict(), "best_step": result.best_step,
            "best_loss": result.best_loss, "checkpoints": result.checkpoints}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = save(Checkpoint(db.schema, result.encoders, result.model, meta), out)
    _dump(_manifest("fit", cfg, model_sha256=digest, best_step=result.best_step, best_loss=result.best_loss,
                    rows=db.row_counts), out.with_name(out.name + ".manifest.json"))
    return {"model": str(out), "model_sha256": digest, "best_step": result.best_step}


def cmd_sample(args) -> dict:
    from .synthesizer import synthesize
    cfg = load_config(args.config)
    cfg.seed = args.seed
    cfg.sample.structure = args.structure
    ck = load(args.model)
    cfg.model = ck.model.hp
    reference = load_database(ck.schema, args.reference)
    rngs = streams(cfg.seed)
    syn = synthesize(ck.model, ck.encoders, reference, rngs, cfg.sample, cfg.structure)
    out = Path(args.out)
    syn.write(out)
    _dump(_manifest("sample", cfg, structure=args.structure, model_sha256=file_hash(args.model),
                    rows=syn.row_counts), out / "manifest.json")
    return {"out": str(out), "rows": syn.row_counts}


def cmd_structure(args) -> dict:
    import pandas as pd

    from .structgen import run_structure
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    db = _load_db(args.schema, args.data)
    res = run_structure(build_entity_graph(db), cfg.structure, streams(cfg.seed)["structure"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    g = res.graph
    files = {}
    for rel in g.relations.values():
        def keys(table, idx):
            if db.schema[table].dimension:
                return np.asarray(g.keys[table], dtype=object)[idx]
            return np.array([str(i) for i in idx], dtype=object)
        fname = rel.name.replace("->", "__").replace("/", "_") + ".csv"
        pd.DataFrame({"child": keys(rel.side0, rel.src), "parent": keys(rel.side1, rel.dst)}).to_csv(
            out / fname, index=False, lineterminator="\n")
        files[rel.name] = fname
    summary = dict(res.summary)
    summary["files"] = files
    summary["nodes"] = dict(g.node_counts)
    _dump(summary, out / "summary.json")
    _dump(_manifest("structure", cfg), out / "manifest.json")
    return {"out": str(out), "relations": len(files)}


def cmd_eval(args) -> dict:
    from .metrics import evaluate, scale_report
    schema = load_schema(args.schema)
    real = load_database(schema, args.real)
    syn = load_database(schema, args.syn)
    holdout = load_database(schema, args.holdout) if args.holdout else None
    report = evaluate(real, syn, holdout, max_hops=args.max_hops, seed=args.seed)
    report = scale_report(report, 100.0)
    report["manifest"] = {"seed": args.seed, "max_hops": args.max_hops, "versions": _versions()}
    _dump(report, Path(args.report))
    return {"report": args.report, "summary": report["summary"]}


def cmd_roundtrip(args) -> dict:
    ok, detail = roundtrip_check(_load_db(args.schema, args.data))
    if not ok:
        raise RoundtripFailed(detail)
    return {"ok": True, "detail": detail}


class RoundtripFailed(RuntimeError):
    pass


def cmd_defaults(args) -> dict:
    sys.stdout.write(defaults_text())
    return {}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="relsynth", description="Synthesize relational databases.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="train a model on a database")
    f.add_argument("--schema", required=True)
    f.add_argument("--data", required=True, help="directory with one <table>.csv per table")
    f.add_argument("--config")
    f.add_argument("--seed", type=int, help="overrides [run] seed")
    f.add_argument("--out", required=True, help="checkpoint path")
    f.add_argument("--log", help="line-delimited JSON progress log")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("sample", help="generate a synthetic database")
    s.add_argument("--model", required=True)
    s.add_argument("--reference", required=True, help="directory with the training database")
    s.add_argument("--structure", choices=("generated", "original"), default="generated")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    st = sub.add_parser("structure", help="generate only the relational structure")
    st.add_argument("--schema", required=True)
    st.add_argument("--data", required=True)
    st.add_argument("--config")
    st.add_argument("--seed", type=int)
    st.add_argument("--out", required=True)
    st.set_defaults(func=cmd_structure)

    e = sub.add_parser("eval", help="score a synthetic database against the real one")
    e.add_argument("--real", required=True)
    e.add_argument("--syn", required=True)
    e.add_argument("--schema", required=True)
    e.add_argument("--holdout")
    e.add_argument("--report", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--max-hops", type=int, default=2)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("roundtrip-check", help="check that load, graph build and assembly are lossless")
    r.add_argument("--schema", required=True)
    r.add_argument("--data", required=True)
    r.set_defaults(func=cmd_roundtrip)

    d = sub.add_parser("defaults", help="print the default config file")
    d.set_defaults(func=cmd_defaults)
    return p


def _threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if raw in (None, ""):
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _fail(kind: str, err: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(err).__name__, "message": str(err)}) + "\n")
    return code


def main(argv=None) -> int:
    from threadpoolctl import threadpool_limits
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        return _fail("usage", e, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limit = _threads()
        with threadpool_limits(limits=limit):
            result = args.func(args)
    except (ConfigError, UsageError) as e:
        return _fail("config", e, 2)
    except RoundtripFailed as e:
        return _fail("roundtrip", e, 1)
    except (OSError, ValueError, KeyError, RuntimeError, FloatingPointError) as e:
        return _fail("runtime", e, 1)
    if result:
        buf = io.StringIO()
        json.dump(result, buf, sort_keys=True)
        sys.stdout.write(buf.getvalue() + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
