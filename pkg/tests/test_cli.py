import json
import subprocess
import sys

import pytest

from relsynth import datasets
from relsynth.cli import main
from relsynth.config import RunConfig, parse_config

TOY = datasets.toy_dir()
SCHEMA = str(TOY / "schema.json")
FAST = "[model]\ndim_h = 16\ntime_dim = 16\nsampling_steps = 10\n[train]\nsteps = 20\ncheckpoint_every = 10\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "fast.cfg").write_text(FAST)
    assert main(["fit", "--schema", SCHEMA, "--data", str(TOY), "--config", str(root / "fast.cfg"),
                 "--out", str(root / "m.rldf"), "--seed", "3", "--log", str(root / "log.jsonl")]) == 0
    return root


def test_fit_outputs(fitted):
    manifest = json.loads((fitted / "m.rldf.manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 3
    assert manifest["config"]["train"]["steps"] == 20
    assert set(manifest["versions"]) >= {"relsynth", "numpy", "kernels"}
    from relsynth.checkpoint import file_hash
    assert manifest["model_sha256"] == file_hash(fitted / "m.rldf")
    logs = [json.loads(x) for x in (fitted / "log.jsonl").read_text().splitlines()]
    assert logs[0]["step"] == 0 and logs[-1]["step"] == 19


def test_fit_byte_identical(fitted, tmp_path, capsys):
    code, out, _ = run(capsys, "fit", "--schema", SCHEMA, "--data", TOY, "--config", fitted / "fast.cfg",
                       "--out", tmp_path / "m.rldf", "--seed", 3)
    assert code == 0 and json.loads(out)["best_step"] >= 10
    assert (tmp_path / "m.rldf").read_bytes() == (fitted / "m.rldf").read_bytes()
    a = json.loads((tmp_path / "m.rldf.manifest.json").read_text())
    b = json.loads((fitted / "m.rldf.manifest.json").read_text())
    assert a == b


@pytest.mark.parametrize("mode", ["generated", "original"])
def test_sample_byte_identical(fitted, tmp_path, capsys, mode):
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "sample", "--model", fitted / "m.rldf", "--reference", TOY, "--structure", mode,
                           "--seed", 11, "--out", tmp_path / name)
        assert code == 0
        assert json.loads(out)["rows"] == {"sales": 19, "store": 4}
        outs.append(tree(tmp_path / name))
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"manifest.json", "sales.csv", "store.csv"}
    run(capsys, "sample", "--model", fitted / "m.rldf", "--reference", TOY, "--structure", mode, "--seed", 12,
        "--out", tmp_path / "c")
    assert tree(tmp_path / "c")["sales.csv"] != outs[0]["sales.csv"]


def test_structure_command(tmp_path, capsys):
    for name in ("a", "b"):
        code, out, _ = run(capsys, "structure", "--schema", SCHEMA, "--data", TOY, "--seed", 4,
                           "--out", tmp_path / name)
        assert code == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["nodes"] == {"store": 4, "sales": 19}
    assert "sales.store_id->store" in summary["files"]


def test_eval_real_vs_real(tmp_path, capsys):
    db = datasets.GENERATORS["planted_correlation"]()
    db.write(tmp_path / "db")
    (tmp_path / "schema.json").write_text(json.dumps(db.schema.to_dict()))
    for name in ("r1.json", "r2.json"):
        code, out, _ = run(capsys, "eval", "--real", tmp_path / "db", "--syn", tmp_path / "db", "--holdout",
                           tmp_path / "db", "--schema", tmp_path / "schema.json", "--report", tmp_path / name)
        assert code == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    rep = json.loads((tmp_path / "r1.json").read_text())
    s = rep["summary"]
    assert rep["scale"] == 100.0
    assert s["shape"] == s["trend"] == s["cardinality"] == 100.0
    assert 45 <= s["c2st"] <= 55


def test_roundtrip_check(tmp_path, capsys):
    code, out, _ = run(capsys, "roundtrip-check", "--schema", SCHEMA, "--data", TOY)
    assert code == 0 and json.loads(out)["ok"] is True
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "store.csv").write_bytes((TOY / "store.csv").read_bytes())
    lines = (TOY / "sales.csv").read_text().splitlines()
    header = lines[0].split(",")
    row = lines[1].split(",")
    row[header.index("store_id")] = "nowhere"
    (bad / "sales.csv").write_text("\n".join([lines[0], ",".join(row)] + lines[2:]) + "\n")
    code, _, err = run(capsys, "roundtrip-check", "--schema", SCHEMA, "--data", bad)
    assert code == 1
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "runtime" and "referential integrity" in payload["message"]


@pytest.mark.parametrize("argv,code,kind", [
    (["fit", "--schema", "missing.json", "--data", ".", "--out", "x"], 1, "runtime"),
    (["bogus"], 2, "usage"),
    (["sample", "--model", "m"], 2, "usage"),
])
def test_errors_are_json(argv, code, kind, capsys):
    got, _, err = run(capsys, *argv)
    assert got == code
    assert json.loads(err.strip().splitlines()[-1])["error"] == kind


def test_bad_config_is_config_error(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("[train]\nsteps = -4\n")
    code, _, err = run(capsys, "structure", "--schema", SCHEMA, "--data", TOY, "--config", tmp_path / "c.cfg",
                       "--out", tmp_path / "o")
    assert code == 2 and json.loads(err)["error"] == "config"


@pytest.mark.parametrize("value", ["0", "abc", "-2"])
def test_threads_env_validated(value, monkeypatch, tmp_path, capsys):
    monkeypatch.setenv("RELDIFF_THREADS", value)
    code, _, err = run(capsys, "structure", "--schema", SCHEMA, "--data", TOY, "--out", tmp_path / "o")
    assert code == 2 and "RELDIFF_THREADS" in json.loads(err)["message"]


def test_threads_env_does_not_change_output(monkeypatch, tmp_path, capsys):
    run(capsys, "structure", "--schema", SCHEMA, "--data", TOY, "--out", tmp_path / "a")
    monkeypatch.setenv("RELDIFF_THREADS", "1")
    code, *_ = run(capsys, "structure", "--schema", SCHEMA, "--data", TOY, "--out", tmp_path / "b")
    assert code == 0 and tree(tmp_path / "a") == tree(tmp_path / "b")


def test_defaults_command(capsys):
    code, out, _ = run(capsys, "defaults")
    assert code == 0
    assert parse_config(out).to_dict() == RunConfig().to_dict()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "relsynth.cli", "roundtrip-check", "--schema", SCHEMA,
                           "--data", str(TOY)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["ok"] is True
