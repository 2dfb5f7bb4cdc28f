"""CLI suite: scenario parsing, exit codes, outputs, reproducibility."""

import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from bss2 import cli
from bss2.adaptive import Trajectory


def _scenario(tmp_path, name="scen.json", **overrides):
    raw = {
        "model": {"name": "gaussian_scale_mixture"},
        "h": {"name": "absvalue"},
        "mu": 1e-3,
        "n_steps": 2_000,
        "seeds": [0, 1, 2],
        "mixing": {"seed": 7},
        "out_dir": str(tmp_path / "out"),
    }
    raw.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_simulate_writes_csvs_and_summary(tmp_path, capsys):
    scen = _scenario(tmp_path)
    assert cli.main(["simulate", scen]) == 0
    out = tmp_path / "out"
    for seed in (0, 1, 2):
        tr = Trajectory.from_csv(out / f"trajectory_seed{seed}.csv")
        assert tr.t[-1] == 2_000
    text = (out / "summary.txt").read_text()
    assert "converged_fraction" in text
    captured = capsys.readouterr().out
    assert "final_indices" in captured


def test_simulate_byte_identical_across_thread_counts(tmp_path, monkeypatch):
    scen1 = _scenario(tmp_path, name="a.json", out_dir=str(tmp_path / "o1"))
    scen2 = _scenario(tmp_path, name="b.json", out_dir=str(tmp_path / "o2"))
    monkeypatch.setenv("BSS_THREADS", "1")
    assert cli.main(["simulate", scen1]) == 0
    monkeypatch.setenv("BSS_THREADS", "4")
    assert cli.main(["simulate", scen2]) == 0
    for seed in (0, 1, 2):
        b1 = (tmp_path / "o1" / f"trajectory_seed{seed}.csv").read_bytes()
        b2 = (tmp_path / "o2" / f"trajectory_seed{seed}.csv").read_bytes()
        assert b1 == b2


def test_simulate_zero_step_size(tmp_path):
    scen = _scenario(tmp_path, mu=0.0, n_steps=100, seeds=[0])
    assert cli.main(["simulate", scen]) == 0
    tr = Trajectory.from_csv(tmp_path / "out" / "trajectory_seed0.csv")
    assert tr.index[-1] == tr.index[0]


def test_simulate_divergence_exit_code(tmp_path):
    scen = _scenario(tmp_path, h={"name": "classical_cubic"}, mu=0.5,
                     n_steps=20_000, seeds=[0])
    assert cli.main(["simulate", scen]) == 2


def test_simulate_explicit_mixing_matrix(tmp_path):
    scen = _scenario(tmp_path, mixing={"matrix": [[1.0, 0.2], [-0.3, 0.8]]},
                     seeds=[0], n_steps=500)
    assert cli.main(["simulate", scen]) == 0
    tr = Trajectory.from_csv(tmp_path / "out" / "trajectory_seed0.csv")
    assert np.allclose(tr.C[0], [[1.0, 0.2], [-0.3, 0.8]])


def test_parse_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["simulate", str(bad)]) == 1
    assert cli.main(["simulate", str(tmp_path / "missing.json")]) == 1
    scen = _scenario(tmp_path, model={"name": "cauchy_pair"})
    assert cli.main(["simulate", scen]) == 1
    scen = _scenario(tmp_path, h={"name": "septic"})
    assert cli.main(["simulate", scen]) == 1


def test_stability_command(tmp_path, capsys):
    scen = _scenario(tmp_path, h={"name": "classical_cubic"})
    assert cli.main(["stability", scen]) == 0
    assert "stable: True" in capsys.readouterr().out
    assert (tmp_path / "out" / "stability.csv").exists()

    scen = _scenario(tmp_path, model={"name": "gaussian_pair"},
                     h={"name": "classical_cubic"})
    assert cli.main(["stability", scen]) == 0
    assert "stable: False" in capsys.readouterr().out


def test_stability_capability_exit_3(tmp_path):
    scen = _scenario(tmp_path, model={"name": "polar", "d": 1.0},
                     h={"name": "classical_cubic"})
    assert cli.main(["stability", scen]) == 3


def test_separability_command(tmp_path, capsys):
    scen = _scenario(tmp_path, model={"name": "polar", "d": 0.0},
                     expectation={"mode": "quad", "nodes": 96})
    assert cli.main(["separability", scen]) == 0
    assert "separable: False" in capsys.readouterr().out

    scen = _scenario(tmp_path, expectation={"mode": "quad", "nodes": 96})
    assert cli.main(["separability", scen]) == 0
    assert "separable: True" in capsys.readouterr().out


def test_reproduce_fig4(tmp_path, capsys):
    out = str(tmp_path / "fig4")
    assert cli.main(["reproduce", "fig4", "--out-dir", out, "--no-plots"]) == 0
    assert os.path.exists(os.path.join(out, "pdf_contour.csv"))
    traj = os.path.join(out, "trajectory_classical_cubic.csv")
    tr = Trajectory.from_csv(traj)
    assert tr.final_index > 0.5  # non-convergent case
    assert "final index" in capsys.readouterr().out


def test_reproduce_fig3_converges(tmp_path):
    out = str(tmp_path / "fig3")
    assert cli.main(["reproduce", "fig3", "--out-dir", out, "--no-plots"]) == 0
    tr = Trajectory.from_csv(os.path.join(out, "trajectory_classical_cubic.csv"))
    assert tr.final_index < 0.2


def test_fig2_scenario_summary_fraction(tmp_path):
    """Calibrated scale-mixture scenario: >= 90% of seeds end non-mixing."""
    spec = cli._FIGURES["fig2"]
    scen = _scenario(
        tmp_path,
        model=spec["model"],
        h={"name": "classical_cubic"},
        mu=spec["mu"],
        n_steps=spec["n_steps"],
        seeds=list(range(10)),
    )
    assert cli.main(["simulate", scen]) == 0
    summary = (tmp_path / "out" / "summary.txt").read_text()
    frac = float(summary.split("converged_fraction: ")[1].split()[0])
    assert frac >= 0.9


def test_console_script_help():
    exe = shutil.which("bss")
    if exe is None:
        pytest.skip("console script not on PATH")
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
