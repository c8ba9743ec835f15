import hashlib
import json
import struct

import numpy as np
import pytest

from relsynth import checkpoint as ckpt
from relsynth.checkpoint import Checkpoint, CheckpointError
from relsynth.denoiser import Denoiser, HyperParams, model_layout
from relsynth.encoders import fit_encoders
from relsynth.graph import build_entity_graph
from relsynth.schema import parse_schema

SMALL = HyperParams(dim_h=8, time_dim=8, ffn_dim=8, mlp_layers=2, transformer_layers=1)


@pytest.fixture(scope="module")
def blob():
    from relsynth.datasets import tiny_hetero
    db = tiny_hetero()
    enc = fit_encoders(db)
    model = Denoiser(model_layout(enc, build_entity_graph(db)), SMALL, np.random.default_rng(0))
    return ckpt.dumps(Checkpoint(db.schema, enc, model, {"steps": 3}))


def parse_by_layout(data):
    """Independent reader following the documented byte layout."""
    assert data[:4] == b"RLDF"
    (version,) = struct.unpack_from("<I", data, 4)
    digest = data[8:40]
    (h,) = struct.unpack_from("<Q", data, 40)
    header = json.loads(data[48:48 + h])
    pos = 48 + h
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        name = data[pos + 2:pos + 2 + n].decode()
        pos += 2 + n
        d = data[pos]
        shape = struct.unpack_from(f"<{d}Q", data, pos + 1)
        pos += 1 + 8 * d
        size = int(np.prod(shape))
        params[name] = np.frombuffer(data, "<f4", size, pos).reshape(shape)
        pos += 4 * size
    assert pos == len(data)
    return version, digest, header, params


def test_layout_matches_documentation(blob):
    version, digest, header, params = parse_by_layout(blob)
    assert version == 1
    canon = json.dumps(header["schema"], sort_keys=True, separators=(",", ":")).encode()
    assert digest == hashlib.sha256(canon).digest()
    assert set(header) == {"schema", "encoders", "hyperparams", "layout", "meta"}
    assert header["hyperparams"]["dim_h"] == 8
    loaded = ckpt.loads(blob)
    assert list(params) == list(loaded.model.params)
    for k, arr in params.items():
        assert np.array_equal(arr.astype(np.float64), loaded.model.params[k].data)


def test_roundtrip_byte_stable(blob, tmp_path):
    again = ckpt.dumps(ckpt.loads(blob))
    assert again == blob
    path = tmp_path / "m.rldf"
    digest = ckpt.save(ckpt.loads(blob), path)
    assert digest == hashlib.sha256(blob).hexdigest() == ckpt.file_hash(path)
    assert ckpt.load(path).meta == {"steps": 3}


def test_loaded_model_matches_float32_weights(blob):
    ck = ckpt.loads(blob)
    for p in ck.model.params.values():
        assert np.array_equal(p.data, p.data.astype(np.float32).astype(np.float64))


def test_schema_mismatch(blob, toy_db):
    ck = ckpt.loads(blob)
    ckpt.loads(blob, ck.schema)
    with pytest.raises(CheckpointError, match="does not match the one the model was trained on"):
        ckpt.loads(blob, toy_db.schema)


def corrupt_header(blob):
    (h,) = struct.unpack_from("<Q", blob, 40)
    header = json.loads(blob[48:48 + h])
    header["schema"]["tables"][0]["columns"][0]["name"] = "shade"
    new = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return blob[:40] + struct.pack("<Q", len(new)) + new + blob[48 + h:]


@pytest.mark.parametrize("mutate,message", [
    (lambda b: b"XXXX" + b[4:], "not an RLDF checkpoint"),
    (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], "unsupported checkpoint version"),
    (lambda b: b[:-3], "truncated"),
    (lambda b: b + b"\0", "trailing bytes"),
    (corrupt_header, "does not match its hash"),
])
def test_corruption_rejected(blob, mutate, message):
    with pytest.raises(CheckpointError, match=message):
        ckpt.loads(mutate(blob))


def test_unknown_and_missing_parameters(blob):
    (h,) = struct.unpack_from("<Q", blob, 40)
    pos = 48 + h
    (count,) = struct.unpack_from("<I", blob, pos)
    # drop the count by one and cut the final record: the loader must notice the missing weight
    _, _, _, params = parse_by_layout(blob)
    last = list(params)[-1]
    arr = params[last]
    rec = 2 + len(last.encode()) + 1 + 8 * arr.ndim + 4 * arr.size
    short = blob[:pos] + struct.pack("<I", count - 1) + blob[pos + 4:len(blob) - rec]
    with pytest.raises(CheckpointError, match="lacks parameters"):
        ckpt.loads(short)
    renamed = blob.replace(last.encode(), b"x" * len(last.encode()))
    with pytest.raises(CheckpointError, match="unknown parameter"):
        ckpt.loads(renamed)


def test_schema_parse_of_header_is_canonical(blob):
    _, digest, header, _ = parse_by_layout(blob)
    assert parse_schema(header["schema"]).fingerprint() == digest
