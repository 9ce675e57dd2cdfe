"""Experiment orchestration and machine-readable artifacts.

Each optimize run writes four plot-ready files into its output directory:

    controls.csv       per-step optimizer controls (plus the envelope
                       columns in smoothed mode)
    populations.csv    basis populations along the propagated trajectory
                       for each requested input basis state
    convergence.jsonl  one record per optimizer iteration
    summary.json       infidelities, pulse areas, termination reason and
                       a full echo of the configuration

Floats are written with 17 significant digits so replaying an exported
pulse file reproduces the run bit-for-bit.  Grid searches derive one seed
per cell from (base seed, cell index), which makes results independent of
worker count and scheduling.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import GridSpec, RunConfig, parse_config
from .exceptions import ConfigError, DimensionMismatch
from .ocp import GateSynthesisProblem
from .solver import SolveReport, solve

__all__ = [
    "run_rng",
    "RunResult",
    "optimize_run",
    "rollout_run",
    "gridsearch_run",
    "drag_check_run",
    "derivative_correlation",
    "read_controls_csv",
]

TOP_CELL_ARTIFACTS = 10


def run_rng(seed: int, cell_index: int = 0) -> np.random.Generator:
    """Deterministic generator for a run; grid cells branch by index."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(cell_index,)))


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


@dataclass
class RunResult:
    """In-memory outcome of one optimize (or replay) run."""

    config: RunConfig
    problem: GateSynthesisProblem
    report: SolveReport
    summary: dict
    out_dir: Path | None = None


def _control_column_names(problem: GateSynthesisProblem) -> list[str]:
    names = list(problem.dynamics.system.channel_names)
    if problem.mode == "smoothed":
        return ["d" + n for n in names]
    return names


def _applied_envelopes(problem: GateSynthesisProblem, traj) -> np.ndarray:
    """Envelope value held during each step (what the waveform generator plays)."""
    if problem.mode == "smoothed":
        return traj.states[:-1, problem.dynamics.n_unitary:]
    return traj.controls


def _smoothness(problem: GateSynthesisProblem, traj) -> float:
    """Sum of squared envelope rates, the tie-breaking diagnostic."""
    if problem.mode == "smoothed":
        return float(np.sum(traj.controls ** 2))
    rates = np.diff(traj.controls, axis=0) / traj.dt
    return float(np.sum(rates ** 2))


def _build_summary(config: RunConfig, problem: GateSynthesisProblem, traj,
                   fidelity, termination: str, iterations: int, wall_ms: float,
                   cost: float | None = None) -> dict:
    names = problem.dynamics.system.channel_names
    areas = _applied_envelopes(problem, traj).sum(axis=0) * traj.dt
    summary = {
        "trace-infidelity": float(fidelity.trace_infidelity),
        "frobenius-cost": float(fidelity.frobenius_cost),
        "pulse-area-ns": {n: float(a) for n, a in zip(names, areas)},
        "smoothness": _smoothness(problem, traj),
        "unitarity-drift": float(problem.dynamics.unitarity_drift(traj.states)),
        "termination": termination,
        "iterations": iterations,
        "wall-ms": float(wall_ms),
        "seed": config.seed,
        "config": config.to_dict(),
    }
    if cost is not None:
        summary["cost"] = float(cost)
    if problem.mode == "smoothed":
        final_env = traj.states[-1, problem.dynamics.n_unitary:]
        summary["final-envelope"] = {n: float(v) for n, v in zip(names, final_env)}
    return summary


def _write_controls_csv(path: Path, problem: GateSynthesisProblem, traj):
    names = _control_column_names(problem)
    header = ["k", "t_ns"] + names
    env = None
    if problem.mode == "smoothed":
        env = _applied_envelopes(problem, traj)
        header += list(problem.dynamics.system.channel_names)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(traj.controls.shape[0]):
            row = [str(k + 1), _fmt(k * traj.dt)]
            row += [_fmt(v) for v in traj.controls[k]]
            if env is not None:
                row += [_fmt(v) for v in env[k]]
            writer.writerow(row)


def _write_populations_csv(path: Path, problem: GateSynthesisProblem, traj, input_state: int):
    """|<j|U(t)|input>|^2 for every basis j, one row per trajectory step."""
    us = problem.dynamics.unitaries(traj.states)
    pops = np.abs(us[:, :, input_state]) ** 2
    dim = problem.dynamics.dim
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_ns"] + [f"p{j}" for j in range(dim)])
        for k in range(pops.shape[0]):
            writer.writerow([_fmt(k * traj.dt)] + [_fmt(p) for p in pops[k]])


def _write_convergence_jsonl(path: Path, report: SolveReport):
    with path.open("w") as fh:
        for rec in report.iterations:
            fh.write(json.dumps({
                "iter": rec.iteration,
                "J": rec.cost,
                "grad_norm": None if np.isnan(rec.grad_norm) else rec.grad_norm,
                "mu": rec.mu,
                "alpha": rec.alpha,
                "wall_ms": rec.wall_ms,
            }) + "\n")


def _write_summary_json(path: Path, summary: dict):
    path.write_text(json.dumps(summary, indent=2) + "\n")


def _write_run_artifacts(out_dir: Path, result: RunResult):
    out_dir.mkdir(parents=True, exist_ok=True)
    traj = result.report.trajectory
    _write_controls_csv(out_dir / "controls.csv", result.problem, traj)
    for i, state in enumerate(result.config.population_states):
        name = "populations.csv" if i == 0 else f"populations_in{state}.csv"
        _write_populations_csv(out_dir / name, result.problem, traj, state)
    _write_convergence_jsonl(out_dir / "convergence.jsonl", result.report)
    _write_summary_json(out_dir / "summary.json", result.summary)


def optimize_run(config: RunConfig, out_dir=None, cell_index: int = 0,
                 cost_multipliers=(1.0, 1.0, 1.0, 1.0)) -> RunResult:
    """Draw seeded initial controls, solve, and optionally write artifacts."""
    problem = config.build_problem(cost_multipliers)
    settings = config.build_settings()
    rng = run_rng(config.seed, cell_index)
    v0 = rng.uniform(-config.init_bound, config.init_bound,
                     size=(config.n_steps, problem.n_controls))
    t0 = time.perf_counter()
    report = solve(problem, v0, settings)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    summary = _build_summary(config, problem, report.trajectory, report.fidelity,
                             report.termination, report.n_iterations, wall_ms,
                             cost=report.cost)
    result = RunResult(config=config, problem=problem, report=report, summary=summary)
    if out_dir is not None:
        result.out_dir = Path(out_dir)
        _write_run_artifacts(result.out_dir, result)
    return result


# -- pulse replay -----------------------------------------------------------------


def read_controls_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read back a controls.csv; returns (controls, envelopes-or-None)."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["k", "t_ns"]:
            raise ValueError(f"{path}: not a controls file (missing k,t_ns header)")
        rows = [row for row in reader if row]
    n_cols = len(header) - 2
    ctrl_names = [c for c in header[2:] if c.startswith("d")]
    n_ctrl = len(ctrl_names) if ctrl_names else n_cols
    data = np.array([[float(v) for v in row[2:]] for row in rows], dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != n_cols:
        raise ValueError(f"{path}: ragged rows")
    if not np.isfinite(data).all():
        raise ValueError(f"{path}: non-finite control values")
    controls = data[:, :n_ctrl]
    envelopes = data[:, n_ctrl:] if n_ctrl < n_cols else None
    return controls, envelopes


def rollout_run(config: RunConfig, controls_path, out_dir=None) -> RunResult:
    """Replay an exported pulse file without optimizing.

    Verifies shapes against the configuration, propagates, and emits the
    population and summary artifacts for independent pulse verification.
    """
    problem = config.build_problem()
    controls, _ = read_controls_csv(controls_path)
    if controls.shape != (config.n_steps, problem.n_controls):
        raise DimensionMismatch(
            f"{controls_path}: expected {config.n_steps} rows x {problem.n_controls}"
            f" control columns, got {controls.shape[0]} x {controls.shape[1]}"
        )
    t0 = time.perf_counter()
    traj = problem.rollout(controls)
    wall_ms = 1e3 * (time.perf_counter() - t0)
    fidelity = problem.fidelity_report(traj)
    report = SolveReport(trajectory=traj, cost=problem.trajectory_cost(traj.states, controls),
                         iterations=[], termination="replay")
    report.fidelity = fidelity
    summary = _build_summary(config, problem, traj, fidelity, "replay", 0, wall_ms,
                             cost=report.cost)
    result = RunResult(config=config, problem=problem, report=report, summary=summary)
    if out_dir is not None:
        result.out_dir = Path(out_dir)
        result.out_dir.mkdir(parents=True, exist_ok=True)
        _write_controls_csv(result.out_dir / "controls.csv", problem, traj)
        for i, state in enumerate(config.population_states):
            name = "populations.csv" if i == 0 else f"populations_in{state}.csv"
            _write_populations_csv(result.out_dir / name, problem, traj, state)
        _write_summary_json(result.out_dir / "summary.json", summary)
    return result


# -- grid search ------------------------------------------------------------------


def _grid_cell(config_dict: dict, cell_index: int, multipliers) -> dict:
    """One grid cell; failures are reported, never raised."""
    config = parse_config(config_dict)
    row = {
        "cell": cell_index,
        "m-q-f": multipliers[0], "m-r-d": multipliers[1],
        "m-r-c": multipliers[2], "m-r-f": multipliers[3],
    }
    try:
        result = optimize_run(config, out_dir=None, cell_index=cell_index,
                              cost_multipliers=multipliers)
        row.update({
            "trace-infidelity": result.summary["trace-infidelity"],
            "frobenius-cost": result.summary["frobenius-cost"],
            "smoothness": result.summary["smoothness"],
            "iterations": result.report.n_iterations,
            "wall-ms": result.summary["wall-ms"],
            "termination": result.report.termination,
            "status": "ok", "error": "",
        })
    except Exception as exc:  # failure rows must not abort the sweep
        row.update({
            "trace-infidelity": float("nan"), "frobenius-cost": float("nan"),
            "smoothness": float("nan"), "iterations": 0, "wall-ms": 0.0,
            "termination": "error", "status": "failed", "error": str(exc),
        })
    return row


_GRID_COLUMNS = ["cell", "m-q-f", "m-r-d", "m-r-c", "m-r-f", "trace-infidelity",
                 "frobenius-cost", "smoothness", "iterations", "wall-ms",
                 "termination", "status", "error"]


def _write_grid_csv(path: Path, rows: list[dict]):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_GRID_COLUMNS)
        for row in rows:
            out = []
            for col in _GRID_COLUMNS:
                v = row[col]
                out.append(_fmt(v) if isinstance(v, float) else str(v))
            writer.writerow(out)


def gridsearch_run(config: RunConfig, out_dir, jobs: int = 1) -> list[dict]:
    """Sweep the cost-multiplier grid, rank by trace infidelity.

    Cells run with per-cell derived seeds, in parallel up to ``jobs``
    workers; per-cell failures become result rows.  Full artifacts are
    regenerated for the best TOP_CELL_ARTIFACTS cells (same seeds, so the
    re-run reproduces the sweep result exactly).
    """
    grid = config.grid if config.grid is not None else GridSpec(
        multipliers={k: (0.1, 0.5, 1.0, 5.0, 10.0) for k in ("q-f", "r-d", "r-c", "r-f")})
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = grid.cells()
    config_dict = config.to_dict()
    config_dict.pop("grid", None)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_grid_cell, [config_dict] * len(cells),
                                 [i for i, _ in cells], [m for _, m in cells],
                                 chunksize=max(1, len(cells) // (4 * jobs))))
    else:
        rows = [_grid_cell(config_dict, i, m) for i, m in cells]
    rows.sort(key=lambda r: (r["status"] != "ok",
                             r["trace-infidelity"] if np.isfinite(r["trace-infidelity"]) else np.inf,
                             r["cell"]))
    _write_grid_csv(out_dir / "grid_results.csv", rows)
    top = [r for r in rows if r["status"] == "ok"][:TOP_CELL_ARTIFACTS]
    for row in top:
        mult = (row["m-q-f"], row["m-r-d"], row["m-r-c"], row["m-r-f"])
        cell_dir = out_dir / f"cell_{row['cell']:04d}"
        result = optimize_run(config, out_dir=cell_dir, cell_index=row["cell"],
                              cost_multipliers=mult)
        result.summary["cell"] = row["cell"]
        result.summary["multipliers"] = list(mult)
        _write_summary_json(cell_dir / "summary.json", result.summary)
    best = top[0] if top else None
    _write_summary_json(out_dir / "grid_summary.json", {
        "cells": len(cells),
        "failed": sum(1 for r in rows if r["status"] != "ok"),
        "best": best,
    })
    return rows


# -- pulse-shape diagnostics --------------------------------------------------------


def derivative_correlation(x_env, y_env, dt: float, trim_fraction: float = 0.1) -> dict:
    """Correlation of one envelope against the discrete derivative of another.

    Pairs y_k with (x_{k+1} - x_k) / dt, drops a fraction of the pairs at
    each end (the boundary regions are forced toward zero and do not
    follow the proportionality), and reports the Pearson correlation plus
    the least-squares factor c in y ~ c * dx/dt.  A constant envelope
    makes the correlation undefined; that is reported, not raised.
    """
    x_env = np.asarray(x_env, dtype=np.float64)
    y_env = np.asarray(y_env, dtype=np.float64)
    if x_env.shape != y_env.shape or x_env.ndim != 1 or x_env.size < 3:
        raise ValueError("envelopes must be equal-length vectors with at least 3 samples")
    rates = np.diff(x_env) / dt
    paired = y_env[: rates.size]
    cut = int(np.floor(trim_fraction * rates.size))
    if rates.size - 2 * cut >= 3:
        rates = rates[cut: rates.size - cut]
        paired = paired[cut: paired.size - cut]
    report = {"n-interior": int(rates.size), "degenerate": False,
              "correlation": None, "factor": None}
    denom = float(rates @ rates)
    if np.std(rates) < 1e-14 or np.std(paired) < 1e-14 or denom == 0.0:
        report["degenerate"] = True
        return report
    corr = np.corrcoef(rates, paired)[0, 1]
    report["correlation"] = float(corr)
    report["factor"] = float((rates @ paired) / denom)
    return report


def drag_check_run(config: RunConfig, controls_path, out_dir=None) -> dict:
    """Leakage-suppression check on a completed three-level smoothed run.

    Correlates the off-phase envelope with the derivative of the in-phase
    envelope over the interior steps and reports the proportionality
    factor next to -1/delta1 and -delta1 for comparison.
    """
    if config.system != "1q3l" or config.mode != "smoothed":
        raise ConfigError("config.system: drag-check requires a 1q3l smoothed run")
    _, envelopes = read_controls_csv(controls_path)
    if envelopes is None or envelopes.shape[1] != 2:
        raise ValueError(f"{controls_path}: expected envelope columns from a smoothed run")
    system = config.build_system()
    report = derivative_correlation(envelopes[:, 0], envelopes[:, 1], config.dt)
    report.update({
        "neg-inverse-delta1": -1.0 / system.delta1,
        "neg-delta1": -system.delta1,
    })
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_summary_json(out / "drag_check.json", report)
    return report
