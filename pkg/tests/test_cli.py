import json
from pathlib import Path

import pytest

from coral.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[graph]
topology = ring
n_agents = 4
[problem]
problem = quadratic
dim = 2
[compressor]
compressor = top_k
k = 1
[params]
delta = {delta}
gamma = {gamma}
[run]
iterations = 60
log_every = 20
threshold = 1e-3
"""


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL.format(delta=0.5, gamma=0.1))
    return path


def test_run_writes_outputs(tmp_path, small_cfg, capsys):
    assert main(["run", str(small_cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "small" / "trace.csv").exists()
    assert json.loads((tmp_path / "o" / "small" / "summary.json").read_text())["schema"] == 1


def test_run_uses_env_root(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("CORAL_OUTPUT_ROOT", str(tmp_path / "env"))
    assert main(["run", str(small_cfg)]) == 0
    assert (tmp_path / "env" / "small" / "trace.csv").exists()


@pytest.mark.filterwarnings("ignore:delta=")
def test_run_divergence_exit_code(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(SMALL.format(delta=1e4, gamma=0.9).replace("iterations = 60", "iterations = 600"))
    assert main(["run", str(path), "--out", str(tmp_path)]) != 0
    assert (tmp_path / "bad" / "trace.csv").read_text().count("\n") >= 2


def test_sweep_and_noise(tmp_path, small_cfg, capsys):
    assert main(["sweep-n", str(small_cfg), "--sizes", "3,4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "small_sweep" / "sweep.csv").exists()
    assert main(["noise", str(small_cfg), "--sigmas", "0,0.01", "--seeds", "0", "--out", str(tmp_path)]) == 0
    assert "sigma=0.01" in capsys.readouterr().out


def test_verify_reports_small_residuals(tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["verify", str(CONFIGS / "verify.ini"), "-o", str(out)]) == 0
    report = json.loads(out.read_text())
    assert max(report["structural_residuals"].values()) < 1e-10
    assert max(report["equilibrium_residuals"].values()) < 1e-10
    assert report["oracle_max_error"] <= 1e-12
    assert report["relaxed_spectral_radius"] < 1


def test_plot_data(tmp_path, small_cfg):
    main(["run", str(small_cfg), "--out", str(tmp_path)])
    trace = tmp_path / "small" / "trace.csv"
    assert main(["plot-data", str(trace), "-o", str(tmp_path / "p.csv")]) == 0
    assert (tmp_path / "p.csv").read_text().startswith("label,t,metric,value\nsmall,0,grad_norm,")


def test_bad_config_reports_error(tmp_path, capsys):
    path = tmp_path / "broken.ini"
    path.write_text("[graph]\ntopology = star\n")
    assert main(["run", str(path), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
