import csv
import json
import subprocess
import sys

import pytest

from mdimlab.cli import COMMANDS, ConfigError, main, validate_config

SMALL = {
    "kolmogorov": {"n": 1, "m": 2, "eps": "1/2"},
    "intervals": {"q": 4, "mesh_bound": 0.2, "grid": 2000},
    "levelfn": {"samples": 60, "n": 4},
    "torus-chain": {"n": 2, "d": 0.5, "eps": 0.3, "arcs": 12, "rows": 8, "overlap": 0.002, "samples": 200},
    "fiber-check": {"samples": 200, "window": 8},
}


def run(tmp_path, command, cfg, fmt="json", extra=()):
    path = tmp_path / f"{command}.cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = main([command, "--config", str(path), "--out", str(out), "--format", fmt, *extra])
    return code, out / f"{command}.{fmt}"


@pytest.mark.parametrize("command", sorted(SMALL))
def test_commands_succeed_and_repeat_byte_for_byte(tmp_path, command):
    code, path = run(tmp_path, command, SMALL[command])
    assert code == 0
    first = path.read_bytes()
    code, path = run(tmp_path, command, SMALL[command])
    assert code == 0 and path.read_bytes() == first
    report = json.loads(first)
    assert report["summary"]["command"] == command


def test_fiber_check_rejects_d_not_below_k(tmp_path):
    code, path = run(tmp_path, "fiber-check", {"k": 1, "d": 1.0})
    assert code == 1 and not path.exists()


def test_unknown_parameter_is_a_config_error():
    with pytest.raises(ConfigError):
        validate_config("intervals", {"q": 5, "colour": "red"})


def test_float_rotation_number_is_rejected(tmp_path):
    code, _ = run(tmp_path, "levelfn", {"alpha": 0.41421356})
    assert code == 1


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["intervals", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_mesh_too_small_is_a_construction_failure(tmp_path):
    code, path = run(tmp_path, "intervals", {"q": 5, "mesh_bound": 1e-5})
    assert code == 2
    report = json.loads(path.read_text())
    assert report["passed"] is False


def test_json_and_csv_agree(tmp_path):
    cfg = SMALL["intervals"]
    _, jpath = run(tmp_path, "intervals", cfg, "json")
    _, cpath = run(tmp_path, "intervals", cfg, "csv")
    report = json.loads(jpath.read_text())
    with cpath.open() as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0].keys()) == report["columns"]
    assert len(rows) == len(report["rows"])
    for got, want in zip(rows, report["rows"]):
        for col in report["columns"]:
            w = want[col] if isinstance(want, dict) else want[report["columns"].index(col)]
            if isinstance(w, float):
                assert float(got[col]) == pytest.approx(w, rel=1e-12)
            else:
                assert got[col] == str(w)


def test_empty_csv_keeps_header(tmp_path):
    from mdimlab.cli import emit_report

    path = tmp_path / "empty.csv"
    emit_report({"summary": {}, "columns": ["a", "b"], "rows": [], "passed": True}, "csv", path)
    assert path.read_text().strip() == "a,b"


def test_seed_sources(tmp_path, monkeypatch):
    cfg = dict(SMALL["fiber-check"], seed=1)
    monkeypatch.setenv("MDIMLAB_SEED", "5")
    _, path = run(tmp_path, "fiber-check", cfg)
    assert json.loads(path.read_text())["summary"]["parameters"]["seed"] == 5
    _, path = run(tmp_path, "fiber-check", cfg, extra=("--seed", "9"))
    assert json.loads(path.read_text())["summary"]["parameters"]["seed"] == 9


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(SMALL["kolmogorov"]))
    res = subprocess.run(
        [sys.executable, "-m", "mdimlab.cli", "kolmogorov", "--config", str(cfg), "--out", str(tmp_path)],
        capture_output=True,
    )
    assert res.returncode == 0
    assert (tmp_path / "kolmogorov.json").exists()


def test_every_command_has_defaults():
    for command in COMMANDS:
        assert validate_config(command, {})["seed"] == 0
