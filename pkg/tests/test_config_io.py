import json

import pytest
import yaml

from icsbm.config import DEFAULTS, config_digest, load_config
from icsbm.errors import ValidationError
from icsbm.io import MANIFEST, OutputDir, dumps

CFG = """seed: 7
law:
  offspring: binary
  step: simple
rpoint:
  times: [3, 4]
  kvecs: [[0.1], [0.2]]
"""


def test_digest_stable_under_key_order():
    a = load_config(text=CFG)
    reordered = "rpoint:\n  kvecs: [[0.1], [0.2]]\n  times: [3, 4]\nlaw:\n  step: simple\n  offspring: binary\nseed: 7\n"
    b = load_config(text=reordered)
    assert a.digest() == b.digest()
    assert load_config(text=CFG.replace("seed: 7", "seed: 8")).digest() != a.digest()


def test_echo_round_trip():
    a = load_config(text=CFG)
    b = load_config(text=a.echo())
    assert dict(a) == dict(b)
    assert config_digest(yaml.safe_load(a.echo())) == a.digest()


def test_unknown_key_reports_line():
    with pytest.raises(ValidationError, match="line 3"):
        load_config(text="seed: 1\nlaw:\n  offspringg: binary\n")


def test_missing_seed_names_field():
    with pytest.raises(ValidationError) as exc:
        load_config(text="law:\n  offspring: binary\n")
    assert exc.value.field == "seed"


def test_bad_law_reports_line():
    with pytest.raises(ValidationError, match="line 3"):
        load_config(text="seed: 1\nlaw:\n  offspring: [[0, 0.5], [2, 0.6]]\n")
    cfg = load_config(text="seed: 1\nlaw:\n  offspring: [[0, 0.5], [2, 0.6]]\n", check_law=False)
    assert cfg["law"]["offspring"][1] == [2, 0.6]


def test_overrides():
    cfg = load_config(text=CFG, overrides=["rpoint.times=[5]", "law.step=spread_out(2)", "seed=11"])
    assert cfg["rpoint"]["times"] == [5]
    assert cfg["law"]["step"] == "spread_out(2)"
    assert cfg["seed"] == 11
    for bad in ["rpoint.nope=1", "nosuch.key=1", "noequals"]:
        with pytest.raises(ValidationError):
            load_config(text=CFG, overrides=[bad])


def test_defaults_need_no_file():
    cfg = load_config()
    assert cfg["seed"] == DEFAULTS["seed"]


def test_seed_type():
    with pytest.raises(ValidationError):
        load_config(text="seed: abc\n")


def test_output_escape_rejected(tmp_path):
    out = OutputDir(tmp_path / "o")
    with pytest.raises(ValidationError):
        out.path("../evil.json")
    with pytest.raises(ValidationError):
        out.path("/etc/passwd")


def test_outputs_reference_manifest(tmp_path):
    out = OutputDir(tmp_path)
    out.json("a.json", {"x": 1.5}, digest="abc")
    out.csv("b.csv", ["h"], [[1]])
    out.jsonl("c.jsonl", [{"y": 2}])
    out.edges("d.edges", [((0, 1), (1, 1))])
    m = out.manifest(digest="abc", seed=1, command="t", params={})
    assert m["outputs"] == ["a.json", "b.csv", "c.jsonl", "d.edges"]
    assert json.loads((tmp_path / "a.json").read_text())["manifest"] == MANIFEST
    assert (tmp_path / "b.csv").read_text().startswith("# manifest:")
    assert json.loads((tmp_path / "c.jsonl").read_text().splitlines()[0])["manifest"] == MANIFEST
    assert (tmp_path / "d.edges").read_text().splitlines()[1] == "0,1 1,1"
    assert json.loads((tmp_path / MANIFEST).read_text())["seed"] == 1


def test_dumps_nonfinite_and_complex():
    text = dumps({"a": float("inf"), "b": float("nan"), "c": 1 + 2j})
    assert json.loads(text) == {"a": "inf", "b": "nan", "c": {"re": 1.0, "im": 2.0}}
