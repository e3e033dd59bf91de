import csv
import glob
import hashlib
import json
import os
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractaldim.cli import main
from fractaldim.config import ConfigError, SystemConfig, parse_sequence

from conftest import CONFIGS, config_path


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2) + "\n")
    return str(p)


def base(**extra):
    d = json.load(open(config_path("dyadic_overlap")))
    d.update(extra)
    return d


@pytest.mark.parametrize("path", sorted(p for p in glob.glob(os.path.join(CONFIGS, "*.json"))
                                         if not p.endswith("bad_weights.json")))
def test_round_trip(path):
    c = SystemConfig.load(path)
    again = SystemConfig.from_text(c.emit())
    assert again.emit() == c.emit() and again.sha256() == c.sha256()


@given(st.floats(0.01, 0.99), st.integers(0, 2**64 - 1), st.floats(0.05, 0.45))
def test_round_trip_random(p, seed, b):
    d = base(seed=seed, weights={"kind": "constant", "p": [p, 1 - p]})
    d["system"]["maps"][1]["b"] = b
    c = SystemConfig.from_dict(d)
    assert SystemConfig.from_text(c.emit()).emit() == c.emit()


def test_error_line_numbers(tmp_path):
    with pytest.raises(ConfigError) as e:
        SystemConfig.load(config_path("bad_weights"))
    assert e.value.line == 10 and "0.8" in str(e.value)
    bad = tmp_path / "broken.json"
    bad.write_text('{\n  "system": {\n    "V": [1, 2,]\n  }\n}\n')
    with pytest.raises(ConfigError) as e:
        SystemConfig.load(str(bad))
    assert e.value.line == 3
    with pytest.raises(ConfigError, match="unknown keys"):
        SystemConfig.from_dict(base(stationary={"resoluton": 8}))
    with pytest.raises(ConfigError, match="positive"):
        SystemConfig.from_dict(base(declared={"C": -1.0}))


def test_parse_sequence():
    assert parse_sequence("1,2").prefix(5) == (1, 2, 1, 2, 1)
    assert parse_sequence("3;1").prefix(3) == (3, 1, 1)


def run(args, out):
    return main(args + ["--out", str(out)])


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert run(["validate", "--config", config_path("cantor")], tmp_path / "v") == 0
    assert run(["stationary", "--config", config_path("bad_weights")], tmp_path / "a") == 2
    assert "bad_weights.json:10" in capsys.readouterr().err
    bad = tmp_path / "broken.json"
    bad.write_text("{\n  \"seed\": 1,\n  oops\n}\n")
    assert run(["validate", "--config", str(bad)], tmp_path / "b") == 2
    assert "broken.json:3" in capsys.readouterr().err
    assert run(["unfold", "--config", config_path("identical_maps")], tmp_path / "c") == 2
    slow = write(tmp_path, "slow.json", base(unfold={"n_max": 1, "K": 2}))
    assert run(["unfold", "--config", slow], tmp_path / "d") == 3
    stuck = write(tmp_path, "stuck.json", base(stationary={"max_iter": 2, "resolution": 64}))
    assert run(["stationary", "--config", stuck], tmp_path / "e") == 3
    monkeypatch.setenv("FRACTALDIM_BUDGET", "100")
    assert run(["dimension", "--config", config_path("cantor")], tmp_path / "f") == 4
    assert run(["validate", "--config", str(tmp_path / "missing.json")], tmp_path / "g") == 2


def test_stationary_outputs(tmp_path):
    out = tmp_path / "st"
    assert run(["stationary", "--config", config_path("cantor"), "--steps", "20000", "--resolution", "1024"], out) == 0
    man = json.load(open(out / "manifest.json"))
    assert man["command"] == "stationary" and man["seed"] == 7
    for name, digest in man["outputs"].items():
        assert hashlib.sha256(open(out / name, "rb").read()).hexdigest() == digest
    summary = json.load(open(out / "stationary.json"))
    assert summary["manifest"] == "manifest.json" and summary["ks_distance"] < 0.03
    rows = list(csv.reader(open(out / "stationary_grid.csv")))
    assert len(rows) == 1025
    assert all(set(json.loads(l)) == {"step", "x", "symbol"} for l in open(out / "chaos_game.jsonl"))


def test_seed_flag_changes_outputs(tmp_path):
    args = ["rscc", "--config", config_path("urn"), "--chains", "500"]
    run(args + ["--seed", "1"], tmp_path / "a")
    run(args + ["--seed", "1"], tmp_path / "b")
    run(args + ["--seed", "2"], tmp_path / "c")
    read = lambda d: open(tmp_path / d / "trajectories.jsonl").read()
    assert read("a") == read("b") and read("a") != read("c")
    assert run(args + ["--seed", str(2**64)], tmp_path / "d") == 2


def test_planar_pgm(tmp_path):
    out = tmp_path / "s"
    assert run(["stationary", "--config", config_path("sierpinski"), "--steps", "5000", "--resolution", "64"], out) == 0
    raw = open(out / "stationary_density.pgm", "rb").read()
    assert raw.startswith(b"P5\n64 64\n255\n")


def test_dimension_flags_overlap(tmp_path):
    out = tmp_path / "d"
    assert run(["dimension", "--config", config_path("dyadic_collapse"), "--points", "30"], out) == 0
    rep = json.load(open(out / "dimension.json"))
    assert rep["overlap_entropy_drop"] and rep["h_S"] < rep["h_sigma"]
    assert rep["formula_dim"] == pytest.approx(0.9183, abs=0.01)


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fractaldim", "validate", "--config", config_path("cantor"),
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0 and "config ok" in r.stdout
