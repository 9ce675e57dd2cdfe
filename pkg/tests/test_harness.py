"""Harness behaviors: artifacts, replay, grid mechanics, drag check, CLI."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pulseopt import parse_config
from pulseopt.harness import (
    derivative_correlation,
    drag_check_run,
    gridsearch_run,
    optimize_run,
    rollout_run,
    run_rng,
)

FAST_X2 = {
    "system": "1q2l", "mode": "smoothed", "goal": "x2", "n": 40,
    "costs": {"q-f": 100.0, "r-d": 0.1, "r-c": 0.001, "r-f": 1.0},
    "seed": 5,
}


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def x2_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("x2run")
    config = parse_config(dict(FAST_X2))
    return optimize_run(config, out_dir=out), out


def test_artifact_files_exist(x2_run):
    _, out = x2_run
    for name in ("controls.csv", "populations.csv", "convergence.jsonl", "summary.json"):
        assert (out / name).exists()


def test_controls_csv_layout(x2_run):
    result, out = x2_run
    rows = read_rows(out / "controls.csv")
    assert rows[0] == ["k", "t_ns", "dx1", "dy1", "x1", "y1"]
    assert len(rows) - 1 == 40
    assert rows[1][0] == "1" and rows[1][1] == "0"
    assert float(rows[1][4]) == 0.0 and float(rows[1][5]) == 0.0  # envelope starts at 0
    assert float(rows[2][1]) == 0.5


def test_populations_rows_and_normalization(x2_run):
    _, out = x2_run
    rows = read_rows(out / "populations.csv")
    assert rows[0] == ["t_ns", "p0", "p1"]
    assert len(rows) - 1 == 41  # every step sampled, including t = 0
    first = [float(v) for v in rows[1]]
    assert first[1] == 1.0 and first[2] == 0.0
    for row in rows[1:]:
        assert abs(float(row[1]) + float(row[2]) - 1.0) <= 1e-9


def test_summary_contents(x2_run):
    result, out = x2_run
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"] in ("converged_cost", "converged_gradient")
    assert summary["trace-infidelity"] <= 1e-6
    assert set(summary["pulse-area-ns"]) == {"x1", "y1"}
    assert summary["config"]["system"] == "1q2l"
    assert summary["iterations"] == len(
        (out / "convergence.jsonl").read_text().strip().splitlines())


def test_convergence_log_costs_non_increasing(x2_run):
    _, out = x2_run
    costs = [json.loads(line)["J"]
             for line in (out / "convergence.jsonl").read_text().strip().splitlines()]
    assert all(b <= a for a, b in zip(costs, costs[1:]))


def test_replay_reproduces_summary(x2_run, tmp_path):
    result, out = x2_run
    config = parse_config(dict(FAST_X2))
    replay = rollout_run(config, out / "controls.csv", out_dir=tmp_path / "replay")
    assert abs(replay.summary["trace-infidelity"]
               - result.summary["trace-infidelity"]) <= 1e-12
    for ch in ("x1", "y1"):
        assert replay.summary["pulse-area-ns"][ch] == result.summary["pulse-area-ns"][ch]


def test_replay_of_hand_written_bang_bang(tmp_path):
    config = parse_config({"system": "1q2l", "mode": "direct", "goal": "x2", "n": 80})
    amp = -np.pi / config.build_system().r1 / 40.0
    path = tmp_path / "bb.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t_ns", "x1", "y1"])
        for k in range(80):
            writer.writerow([k + 1, format(k * 0.5, ".17g"), format(amp, ".17g"), "0"])
    result = rollout_run(config, path, out_dir=tmp_path / "bb_out")
    assert result.summary["trace-infidelity"] <= 1e-10


def test_replay_rejects_truncated_file(x2_run, tmp_path):
    _, out = x2_run
    lines = (out / "controls.csv").read_text().strip().splitlines()
    short = tmp_path / "short.csv"
    short.write_text("\n".join(lines[:-3]) + "\n")
    config = parse_config(dict(FAST_X2))
    with pytest.raises(Exception, match="expected 40 rows"):
        rollout_run(config, short)


def test_determinism_across_runs(x2_run, tmp_path):
    result, out = x2_run
    config = parse_config(dict(FAST_X2))
    second = optimize_run(config, out_dir=tmp_path / "again")
    assert (tmp_path / "again" / "controls.csv").read_text() == (out / "controls.csv").read_text()
    assert (tmp_path / "again" / "populations.csv").read_text() == (out / "populations.csv").read_text()
    a = json.loads((tmp_path / "again" / "summary.json").read_text())
    b = result.summary
    for key in ("trace-infidelity", "frobenius-cost", "pulse-area-ns", "final-envelope",
                "termination", "iterations", "cost", "seed", "config"):
        assert a[key] == b[key]


def test_run_rng_cell_derivation():
    a = run_rng(7, 0).uniform(size=5)
    b = run_rng(7, 0).uniform(size=5)
    c = run_rng(7, 1).uniform(size=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


# -- grid search ----------------------------------------------------------------


GRID_X2 = {**FAST_X2, "n": 30,
           "grid": {"q-f": [1.0, 2.0], "r-d": [0.5, 1.0], "r-c": [1.0], "r-f": [1.0]}}


def test_single_cell_grid_matches_optimize(tmp_path):
    config = parse_config({**FAST_X2, "n": 30,
                           "grid": {"q-f": [1.0], "r-d": [1.0], "r-c": [1.0], "r-f": [1.0]}})
    rows = gridsearch_run(config, tmp_path / "grid")
    assert len(rows) == 1
    direct = optimize_run(parse_config({**FAST_X2, "n": 30}))
    assert rows[0]["trace-infidelity"] == direct.summary["trace-infidelity"]
    assert rows[0]["iterations"] == direct.report.n_iterations


def test_grid_results_ranked_and_artifacts(tmp_path):
    config = parse_config(dict(GRID_X2))
    rows = gridsearch_run(config, tmp_path / "grid")
    assert len(rows) == 4
    infids = [r["trace-infidelity"] for r in rows]
    assert infids == sorted(infids)
    table = read_rows(tmp_path / "grid" / "grid_results.csv")
    assert table[0][:6] == ["cell", "m-q-f", "m-r-d", "m-r-c", "m-r-f", "trace-infidelity"]
    assert len(table) - 1 == 4
    for row in rows:  # all four cells are in the top-10 artifact set
        cell_dir = tmp_path / "grid" / f"cell_{row['cell']:04d}"
        assert (cell_dir / "summary.json").exists()
        cell_summary = json.loads((cell_dir / "summary.json").read_text())
        assert cell_summary["trace-infidelity"] == row["trace-infidelity"]
    best = json.loads((tmp_path / "grid" / "grid_summary.json").read_text())["best"]
    assert best["cell"] == rows[0]["cell"]


def test_grid_parallel_matches_serial(tmp_path):
    config = parse_config(dict(GRID_X2))
    serial = gridsearch_run(config, tmp_path / "serial", jobs=1)
    parallel = gridsearch_run(config, tmp_path / "parallel", jobs=2)
    for a, b in zip(serial, parallel):
        assert a["cell"] == b["cell"]
        assert a["trace-infidelity"] == b["trace-infidelity"]
        assert a["iterations"] == b["iterations"]


def test_coarse_grid_on_fast_gate_reaches_high_fidelity(tmp_path):
    # Full 625-cell coarse sweep on the cheap two-level problem: at least
    # one cell must land under 1e-6 trace infidelity.
    config = parse_config({**FAST_X2, "grid": {"preset": "coarse"},
                           "solver": {"max-iterations": 60}})
    rows = gridsearch_run(config, tmp_path / "grid")
    assert len(rows) == 625
    assert rows[0]["status"] == "ok"
    assert rows[0]["trace-infidelity"] <= 1e-6


def test_grid_cell_failure_recorded_not_raised(tmp_path):
    # A wrong-length diagonal only surfaces inside the cell; the sweep
    # must record the failure and carry on.
    config = parse_config({**GRID_X2, "costs": {"r-d": [1.0, 1.0, 1.0]},
                           "grid": {"q-f": [1.0], "r-d": [1.0], "r-c": [1.0], "r-f": [1.0]}})
    rows = gridsearch_run(config, tmp_path / "grid")
    assert len(rows) == 1
    assert rows[0]["status"] == "failed"
    assert "r_d" in rows[0]["error"]
    table = read_rows(tmp_path / "grid" / "grid_results.csv")
    assert table[1][read_rows(tmp_path / "grid" / "grid_results.csv")[0].index("status")] == "failed"


# -- drag check -----------------------------------------------------------------


def test_derivative_correlation_exact_proportionality():
    t = np.linspace(0, 1, 60)
    x = np.sin(2 * np.pi * t) * np.exp(-3 * (t - 0.5) ** 2)
    dt = 0.5
    y = 0.37 * np.gradient(x, dt)
    # pair y_k with the forward difference, matching the check's definition
    y_fd = 0.37 * np.diff(x) / dt
    report = derivative_correlation(x, np.append(y_fd, 0.0), dt)
    assert not report["degenerate"]
    assert abs(report["correlation"]) >= 1 - 1e-12
    assert report["factor"] == pytest.approx(0.37, rel=1e-12)
    assert report["n-interior"] < len(x) - 1  # ends trimmed


def test_derivative_correlation_constant_envelope_is_degenerate():
    report = derivative_correlation(np.ones(50), np.zeros(50), 0.5)
    assert report["degenerate"]
    assert report["correlation"] is None


def test_drag_check_requires_three_level_smoothed(tmp_path, x2_run):
    _, out = x2_run
    config = parse_config(dict(FAST_X2))
    with pytest.raises(Exception, match="1q3l"):
        drag_check_run(config, out / "controls.csv")


def test_drag_check_on_synthetic_run(tmp_path):
    config = parse_config({"system": "1q3l", "mode": "smoothed", "goal": "x3", "n": 60})
    t = np.linspace(0, 1, 60)
    x = 0.2 * np.exp(-20 * (t - 0.5) ** 2)
    y = np.append(1.7 * np.diff(x) / 0.5, 0.0)
    path = tmp_path / "controls.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t_ns", "dx1", "dy1", "x1", "y1"])
        for k in range(60):
            writer.writerow([k + 1, format(k * 0.5, ".17g"), "0", "0",
                             format(x[k], ".17g"), format(y[k], ".17g")])
    report = drag_check_run(config, path, out_dir=tmp_path)
    assert abs(report["correlation"]) >= 1 - 1e-10
    assert report["factor"] == pytest.approx(1.7, rel=1e-9)
    assert report["neg-delta1"] == pytest.approx(2 * np.pi * 0.3120)
    assert report["neg-inverse-delta1"] == pytest.approx(1 / (2 * np.pi * 0.3120))
    assert (tmp_path / "drag_check.json").exists()


# -- command line ----------------------------------------------------------------


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "pulseopt.cli", *args],
                          capture_output=True, text=True)


def test_cli_optimize_and_exit_codes(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "system: 1q2l\nmode: smoothed\ngoal: x2\nn: 40\n"
        "costs: {q-f: 100.0, r-d: 0.1, r-c: 0.001, r-f: 1.0}\nseed: 5\n")
    proc = run_cli("optimize", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "out" / "summary.json").exists()

    bad = tmp_path / "bad.yaml"
    bad.write_text("system: 1q2l\nmode: direct\ngoal: x2\nn: 1\n")
    proc = run_cli("optimize", "--config", str(bad), "--out", str(tmp_path / "o2"))
    assert proc.returncode == 1
    assert "config.n" in proc.stderr


def test_cli_seed_override_changes_draw(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "system: 1q2l\nmode: smoothed\ngoal: x2\nn: 30\n"
        "costs: {q-f: 100.0, r-d: 0.1, r-c: 0.001, r-f: 1.0}\nseed: 5\n")
    a = run_cli("optimize", "--config", str(cfg), "--out", str(tmp_path / "a"))
    b = run_cli("optimize", "--config", str(cfg), "--seed", "6", "--out", str(tmp_path / "b"))
    assert a.returncode == 0 and b.returncode == 0
    ca = (tmp_path / "a" / "controls.csv").read_text()
    cb = (tmp_path / "b" / "controls.csv").read_text()
    assert ca != cb
    sb = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert sb["seed"] == 6


def test_cli_no_out_dir_is_validation_error(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("system: 1q2l\nmode: direct\ngoal: x2\nn: 10\n")
    proc = run_cli("optimize", "--config", str(cfg))
    assert proc.returncode == 1
    assert "out" in proc.stderr
