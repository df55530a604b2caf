import json

import pytest

from ratpress.cli import RunConfig, build_parser, main, parse_config
from ratpress.errors import ConfigError


@pytest.fixture
def map_file(tmp_path):
    def write(name, coeffs):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps({"numerator": [[a.real, a.imag] for a in map(complex, coeffs)]}))
        return path
    return write


def _config(tmp_path, data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return path


def test_minimal_config(tmp_path, map_file):
    map_file("cheb", [-2, 0, 1])
    cfg = parse_config(_config(tmp_path, {"map": "cheb.json", "task": "pressure"}))
    assert cfg.map == str(tmp_path / "cheb.json")
    assert cfg.grid == RunConfig().grid and cfg.seed == 0 and cfg.metric == "spherical"


@pytest.mark.parametrize("data, key", [
    ({"map": "m.json", "depth": -3}, "depth"),
    ({"map": "m.json", "depht": 10}, "depht"),
    ({"map": "m.json", "task": "plot"}, "task"),
    ({"map": "m.json", "grid": [0, 1]}, "grid"),
    ({"map": "m.json", "seed": 1.5}, "seed"),
    ({"task": "pressure"}, "map"),
])
def test_config_errors(tmp_path, data, key):
    with pytest.raises(ConfigError) as exc:
        parse_config(_config(tmp_path, data))
    assert exc.value.key == key


def test_flags_override_file(tmp_path, map_file):
    map_file("z2", [0, 0, 1])
    path = _config(tmp_path, {"map": "z2.json", "depth": 10})
    cfg = parse_config(path, {"depth": 12, "seed": None})
    assert cfg.depth == 12 and cfg.seed == 0


def test_exit_code_two(tmp_path, capsys):
    path = _config(tmp_path, {"map": "x.json", "depht": 3})
    assert main(["pressure", "--config", str(path)]) == 2
    assert "depht" in capsys.readouterr().err


def test_help_lists_defaults():
    text = build_parser()._subparsers._group_actions[0].choices["pressure"].format_help()
    assert "default -3:3:0.1" in text


def test_pressure_task(tmp_path, map_file):
    m = map_file("z2", [0, 0, 1])
    out = tmp_path / "out"
    code = main(["pressure", "--map", str(m), "--out", str(out), "--grid=-1:2:0.25", "--depth", "12"])
    assert code == 0
    lines = (out / "pressure.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,P,P_lo,P_hi,slope_left,slope_right,source"
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["results"]["t_star"] - 1) <= 1e-3
    assert set(summary) >= {"inputs", "versions", "seed", "timings", "warnings", "exit_code"}


def test_computation_error_exit_one(tmp_path, map_file):
    m = map_file("z2", [0, 0, 1])
    code = main(["pressure", "--map", str(m), "--out", str(tmp_path / "o"), "--depth", "40"])
    assert code == 1
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["error"]["type"] == "BudgetExceeded"


def test_induced_rejection(tmp_path, map_file):
    m = map_file("zi", [1j, 0, 1])
    out = tmp_path / "ind"
    code = main(["induced", "--map", str(m), "--out", str(out), "--radii", "0.03:0.08"])
    assert code == 3
    ver = json.loads((out / "summary.json").read_text())["results"]["verification"]
    assert ver["failure"]["n"] == 13 and ver["failure"]["sample"] is not None


@pytest.mark.parametrize("task, files", [
    ("pressure", ["pressure.csv"]),
    ("spectra", ["lyapunov.csv", "dimension.csv", "integral_means.csv"]),
    ("deviations", ["deviations.csv", "rate.csv"]),
])
def test_reruns_are_byte_identical(tmp_path, map_file, task, files):
    m = map_file("c", [0.1, 0, 1])
    args = [task, "--map", str(m), "--grid=-1:2:0.25", "--depth", "10", "--ensemble-depth", "8"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
