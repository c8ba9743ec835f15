"""RLDF model checkpoints (byte layout in docs/checkpoint.md)."""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .denoiser import Denoiser, HyperParams, ModelLayout
from .encoders import EncoderSet
from .schema import Schema, parse_schema

MAGIC = b"RLDF"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    schema: Schema
    encoders: EncoderSet
    model: Denoiser
    meta: dict = field(default_factory=dict)


def _pack_str(buf: io.BytesIO, s: str, fmt: str):
    raw = s.encode("utf-8")
    buf.write(struct.pack(fmt, len(raw)))
    buf.write(raw)


def dumps(ck: Checkpoint) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(ck.schema.fingerprint())
    header = {
        "schema": ck.schema.to_dict(),
        "encoders": ck.encoders.to_dict(),
        "hyperparams": ck.model.hp.to_dict(),
        "layout": ck.model.layout.to_dict(),
        "meta": ck.meta,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<Q", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(ck.model.params)))
    for name, p in ck.model.params.items():
        _pack_str(buf, name, "<H")
        arr = np.asarray(p.data)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(data: bytes, schema: Schema | None = None) -> Checkpoint:
    """Parse a checkpoint; if ``schema`` is given its fingerprint must match the stored one."""
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not an RLDF checkpoint")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    digest = r.take(32)
    (n,) = r.unpack("<Q")
    header = json.loads(r.take(n).decode("utf-8"))
    stored = parse_schema(header["schema"])
    if stored.fingerprint() != digest:
        raise CheckpointError("checkpoint schema section does not match its hash")
    if schema is not None and schema.fingerprint() != digest:
        raise CheckpointError("schema does not match the one the model was trained on")
    encoders = EncoderSet.from_dict(header["encoders"])
    model = Denoiser(ModelLayout.from_dict(header["layout"]), HyperParams.from_dict(header["hyperparams"]))
    (count,) = r.unpack("<I")
    seen = set()
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float64)
        if name not in model.params:
            raise CheckpointError(f"unknown parameter {name!r}")
        if model.params[name].data.shape != arr.shape:
            raise CheckpointError(f"shape mismatch for {name!r}: {arr.shape} vs {model.params[name].data.shape}")
        model.params[name].data = arr
        seen.add(name)
    missing = set(model.params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after parameter records")
    return Checkpoint(stored, encoders, model, header.get("meta", {}))


def save(ck: Checkpoint, path: str | Path) -> str:
    """Write the checkpoint and return the SHA-256 hex digest of the file."""
    data = dumps(ck)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load(path: str | Path, schema: Schema | None = None) -> Checkpoint:
    return loads(Path(path).read_bytes(), schema)


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
