import json
import math
from pathlib import Path

import pytest

from stablelbm.cli import build_config, main, parse_config, parse_number
from stablelbm.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize(
    "text,value",
    [(0.25, 0.25), (3, 3.0), ("3/20", 0.15), ("-1/4", -0.25), ("0.5", 0.5), ("3/20/sqrt3", 0.15 / math.sqrt(3))],
)
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("bad", ["abc", "1/0", True])
def test_parse_number_rejects(bad):
    with pytest.raises(ConfigurationError):
        parse_number(bad)


def test_defaults():
    cfg = build_config({"command": "construct", "preset": "preset-1"})
    assert cfg.tau == 0.5 and cfg.cs2 == pytest.approx(1 / 3) and cfg.velocity_set == "D3Q33"


def test_unknown_keys_listed():
    with pytest.raises(ConfigurationError, match="colour, speed"):
        build_config({"command": "scan", "speed": 1, "colour": 2})


def test_tau_below_half_rejected():
    with pytest.raises(ConfigurationError, match="allow-unstable"):
        build_config({"command": "construct", "preset": "preset-1", "tau": 0.4})
    cfg = build_config({"command": "construct", "preset": "preset-1", "tau": 0.4, "allow_unstable": True})
    assert cfg.tau == 0.4


@pytest.mark.parametrize(
    "raw",
    [
        {"command": "nope"},
        {"command": "construct"},
        {"command": "construct", "preset": "preset-9"},
        {"command": "construct", "u0": [1, 2]},
        {"command": "construct", "preset": "preset-1", "velocity_set": "D3Q99"},
        {"command": "simulate", "preset": "preset-1", "test_case": 5},
        {"command": "scan", "tolerances": {"lp": 1e-3}},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigurationError):
        build_config(raw)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigurationError, match="does not exist"):
        parse_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError, match="malformed"):
        parse_config(str(bad))


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    assert parse_config(str(path)).command in path.stem


def test_construct_and_verify(tmp_path, capsys):
    assert main(["construct", "--preset", "preset-1", "--out", str(tmp_path)]) == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["certified"] and cert["kernel_dimension"] == 14 and cert["rank_h"] == 4
    assert main(["verify", "--operator", str(tmp_path / "operator.txt"), "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_construct_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["construct", "--preset", "preset-2", "--out", str(a)])
    main(["construct", "--preset", "preset-2", "--out", str(b)])
    assert (a / "operator.txt").read_text() == (b / "operator.txt").read_text()


def test_infeasible_exit_code(tmp_path, capsys):
    assert main(["construct", "--preset", "preset-4", "--out", str(tmp_path)]) == 2
    assert "infeasible" in capsys.readouterr().out


def test_error_exit_code(capsys):
    assert main(["construct", "--preset", "preset-1", "--tau", "0.3"]) == 1
    assert "allow-unstable" in capsys.readouterr().err


def test_simulate_writes_outputs(tmp_path):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"command": "simulate", "preset": "preset-1", "init": "random", "grids": [5], "steps": 4}))
    assert main(["--config", str(cfg), "--out", str(tmp_path)]) == 0
    mon = (tmp_path / "monitors.csv").read_text().splitlines()
    assert mon[0].startswith("step,energy") and len(mon) == 6
    assert (tmp_path / "snapshot.csv").exists() and (tmp_path / "snapshot.bin").exists()


def test_converge_and_scan(tmp_path):
    assert main(["converge", "--preset", "preset-1", "--grid", "16,32", "--test-case", "1", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "convergence.csv").read_text().splitlines()
    assert rows[0] == "grid_n,error,order" and len(rows) == 3
    cfg = tmp_path / "scan.json"
    cfg.write_text(json.dumps({"command": "scan", "u01": "1/6", "resolution": 3}))
    assert main(["--config", str(cfg), "--out", str(tmp_path), "--threads", "2"]) == 0
    assert len((tmp_path / "domain.csv").read_text().splitlines()) == 10
