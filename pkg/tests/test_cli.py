import json
import os

import pytest

from swff import cli
from swff.integrator import IntegrationError


def run(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path)])


def test_simulate_outputs(tmp_path):
    assert run(tmp_path, "simulate", "--days", "12") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["figure"] == cli.FIGURES["simulate"]
    assert set(man["outputs"]) == {"trajectory.csv", "events.csv", "summary.json"}
    assert man["parameters"]["k"] == 1.0
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["wake_mean_h"] == pytest.approx(15.33, abs=0.1)
    assert summ["sleeps_per_day_last10"] == 1.0


def test_reruns_are_bitwise_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "simulate", "--days", "5", "--k", "0.6") == 0
    assert run(b, "simulate", "--days", "5", "--k", "0.6") == 0
    for name in ("trajectory.csv", "events.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"k": 0.7, "days": 4}))
    assert run(tmp_path / "o", "simulate", "--config", str(cfg), "--k", "0.8") == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["parameters"]["k"] == 0.8 and man["config"]["days"] == 4


@pytest.mark.parametrize("args", [
    ["simulate", "--k", "0"],
    ["simulate", "--k", "1.5"],
    ["staircase", "--k-range", "0.5,0.6,0.01"],
    ["staircase", "--k-range", "0.5,x,0.01"],
    ["map", "--order", "0"],
])
def test_config_errors(tmp_path, args):
    assert run(tmp_path, *args) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kk": 1}))
    assert run(tmp_path / "o", "simulate", "--config", str(cfg)) == 2


def test_numerical_failure_exit(tmp_path, monkeypatch):
    def boom(cfg):
        raise IntegrationError("step size underflow")
    monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
    assert run(tmp_path, "simulate") == 3
    assert not (tmp_path / "manifest.json").exists()


def test_staircase_small(tmp_path):
    assert run(tmp_path, "staircase", "--k-range", "0.6,0.58,0.01", "--jobs", "1") == 0
    rows = (tmp_path / "staircase.csv").read_text().splitlines()
    assert len(rows) == 4 and rows[1].startswith("0.6,1,1,")
    assert json.loads((tmp_path / "plateaus.json").read_text())[0]["p"] == 1


def test_zsurface(tmp_path):
    assert run(tmp_path, "zsurface") == 0
    assert os.path.getsize(tmp_path / "zsurface.csv") > 0
    assert (tmp_path / "fold_curves.csv").read_text().startswith("side,c,h_fold,f_W_fold")


def test_jobs_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SWFF_JOBS", "1")
    assert run(tmp_path, "chs", "--k-range", "0.46,0.46,0.01", "--jobs", "4") == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config"]["jobs"] == 1
