import json
from pathlib import Path

import pytest

from icsbm.cli import EXIT_RUNTIME, EXIT_STATISTICAL, EXIT_VALIDATION, run

BINARY = str(Path(__file__).resolve().parents[1] / "configs" / "binary.yaml")


def _result(out, name):
    body = json.loads((out / name).read_text())
    body.pop("manifest")
    return body


def test_rpoint_tau(tmp_path, capsys):
    assert run(["rpoint", "tau", "--config", BINARY, "--out", str(tmp_path)]) == 0
    line = json.loads(capsys.readouterr().out)
    assert line["value"] == 1.0
    assert _result(tmp_path, "rpoint_tau.json")["value"] == 1.0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seed"] == 20240601 and man["command"] == "rpoint tau"
    assert "rpoint_tau.json" in man["outputs"]


def test_global_flags_before_subcommand(tmp_path):
    assert run(["--config", BINARY, "--out", str(tmp_path), "rpoint", "tau", "--set", "rpoint.times=[3, 4]",
                "--set", "rpoint.kvecs=[[0.0], [0.0]]"]) == 0
    # E[N_3 N_4] for binary branching: 1 + 3 sigma^2 with sigma^2 = 1
    assert _result(tmp_path, "rpoint_tau.json")["value"] == pytest.approx(4.0)


def test_byte_identical_reruns(tmp_path):
    for d in ("a", "b"):
        assert run(["brw", "sample", "--config", BINARY, "--out", str(tmp_path / d)]) == 0
    for f in (tmp_path / "a").iterdir():
        if f.name != "manifest.json":
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_missing_seed(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("law:\n  offspring: binary\n")
    assert run(["rpoint", "tau", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_VALIDATION
    assert "seed" in capsys.readouterr().err


def test_bad_law_exits_validation(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\nlaw:\n  offspring: [[0, 0.5], [2, 0.6]]\n")
    assert run(["rpoint", "tau", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_verify_negative_control(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(f"seed: 1\noutput_dir: {tmp_path / 'o'}\nlaw:\n  offspring: [[0, 0.5], [2, 0.6]]\n")
    assert run(["verify", "exact", "--config", str(cfg), "--only", "1"]) == EXIT_STATISTICAL
    out = capsys.readouterr().out
    assert "offspring.criticality" in out
    crit = [l for l in out.splitlines() if "offspring.criticality" in l]
    assert "FAIL" in crit[0]


def test_usf_guard_is_runtime(tmp_path):
    code = run(["usf", "rpoint", "--out", str(tmp_path), "--set", "usf.N=4", "--set", "usf.times=[2]",
                "--set", "usf.d=2", "--set", "usf.kvecs=[[0.0, 0.0]]"])
    assert code == EXIT_RUNTIME


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 2


def test_op_sample_writes_bond_record(tmp_path):
    assert run(["op", "sample", "--out", str(tmp_path), "--set", "op.d=2", "--set", "op.L=1",
                "--set", "op.n=5"]) == 0
    assert (tmp_path / "op_cluster.opbr").read_bytes()[:4] == b"OPBR"
