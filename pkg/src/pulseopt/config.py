"""Run configuration: a strict kebab-case YAML schema.

Unknown keys are hard errors and every message carries the offending
field path; a silent typo in a cost diagonal would otherwise invalidate
an entire grid search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import MODES, Dynamics
from .exceptions import ConfigError
from .ocp import CostMatrices, GateSynthesisProblem
from .solver import SolverSettings
from .transmon import TransmonSystem, goal_gate, make_system

__all__ = ["RunConfig", "GridSpec", "load_config", "parse_config",
           "COARSE_MULTIPLIERS", "FINE_MULTIPLIERS"]

COARSE_MULTIPLIERS = (0.1, 0.5, 1.0, 5.0, 10.0)
FINE_MULTIPLIERS = (0.1, 0.25, 0.5, 0.75, 1.0, 2.5, 5.0, 7.5, 10.0)

_SYSTEMS = ("1q2l", "1q3l", "2q2l", "2q3l")
_GOALS = ("x2", "x3", "cr4", "cr9")
_COST_KEYS = ("q-f", "r-d", "r-c", "r-f")

_PARAM_KEYS = {
    "omega1-ghz": "omega1",
    "omega2-ghz": "omega2",
    "delta1-ghz": "delta1",
    "delta2-ghz": "delta2",
    "j12-ghz": "j12",
    "r1-ghz": "r1",
    "r2-ghz": "r2",
}

_SOLVER_KEYS = {
    "max-iterations": "max_iterations",
    "cost-tolerance": "cost_tolerance",
    "gradient-tolerance": "gradient_tolerance",
    "mu-init": "mu_init",
    "mu-min": "mu_min",
    "mu-max": "mu_max",
    "mu-scale": "mu_scale",
    "n-alphas": "n_alphas",
    "goldstein": "goldstein",
}


def _require_mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(value).__name__}")
    return value


def _reject_unknown(mapping: dict, allowed, path: str):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown key")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    return value


def _as_cost(value, path: str):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, list) and value and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return [float(v) for v in value]
    raise ConfigError(f"{path}: expected a number or a list of numbers, got {value!r}")


def _as_choice(value, choices, path: str) -> str:
    if not isinstance(value, str) or value.lower() not in choices:
        raise ConfigError(f"{path}: expected one of {list(choices)}, got {value!r}")
    return value.lower()


@dataclass(frozen=True)
class GridSpec:
    """Per-matrix multiplier lists for a cost grid search."""

    multipliers: dict  # cost key -> tuple of positive floats

    def __post_init__(self):
        for key in _COST_KEYS:
            values = self.multipliers.get(key)
            if not values or any(v <= 0 for v in values):
                raise ConfigError(f"grid.{key}: multiplier list must be non-empty and positive")

    @property
    def n_cells(self) -> int:
        return int(np.prod([len(self.multipliers[k]) for k in _COST_KEYS]))

    def cells(self):
        """(index, (m_qf, m_rd, m_rc, m_rf)) in a fixed enumeration order."""
        lists = [self.multipliers[k] for k in _COST_KEYS]
        return list(enumerate(itertools.product(*lists)))


@dataclass
class RunConfig:
    """Validated experiment description; see load_config for the schema."""

    system: str
    mode: str
    goal: str
    n_steps: int
    dt: float = 0.5
    params_ghz: dict = field(default_factory=dict)
    use_r2_on_second_drive: bool = False
    costs: dict = field(default_factory=lambda: {"q-f": 100.0, "r-d": 1.0, "r-c": 0.1, "r-f": 1.0})
    solver: dict = field(default_factory=dict)
    seed: int = 0
    init_bound: float = 0.01
    out_dir: str | None = None
    population_states: list = field(default_factory=lambda: [0])
    grid: GridSpec | None = None

    # -- builders ---------------------------------------------------------------

    def build_system(self) -> TransmonSystem:
        return make_system(self.system, dt=self.dt, params_ghz=self.params_ghz,
                           use_r2_on_second_drive=self.use_r2_on_second_drive)

    def build_problem(self, cost_multipliers=(1.0, 1.0, 1.0, 1.0)) -> GateSynthesisProblem:
        system = self.build_system()
        dynamics = Dynamics(system, self.mode)
        costs = CostMatrices.build(
            dynamics.n_unitary, dynamics.n_controls,
            q_f=self.costs["q-f"], r_d=self.costs["r-d"],
            r_c=self.costs["r-c"], r_f=self.costs["r-f"],
        ).scaled(*cost_multipliers)
        goal = goal_gate(self.goal, system)
        return GateSynthesisProblem(dynamics, costs, goal, self.n_steps)

    def build_settings(self) -> SolverSettings:
        kwargs = {_SOLVER_KEYS[k]: v for k, v in self.solver.items()}
        return SolverSettings(seed=self.seed, **kwargs)

    def to_dict(self) -> dict:
        """Normalized echo of the configuration (kebab-case keys)."""
        out = {
            "system": self.system,
            "mode": self.mode,
            "goal": self.goal,
            "n": self.n_steps,
            "dt": self.dt,
            "costs": dict(self.costs),
            "solver": dict(self.solver),
            "seed": self.seed,
            "init-bound": self.init_bound,
            "population-states": list(self.population_states),
        }
        if self.params_ghz or self.use_r2_on_second_drive:
            params = {k: self.params_ghz[v] for k, v in _PARAM_KEYS.items()
                      if v in self.params_ghz}
            if self.use_r2_on_second_drive:
                params["use-r2-on-second-drive"] = True
            out["system-params"] = params
        if self.grid is not None:
            out["grid"] = {k: list(v) for k, v in self.grid.multipliers.items()}
        return out


def _parse_grid(raw, path: str, n_controls_hint: int | None = None) -> GridSpec:
    raw = _require_mapping(raw, path)
    allowed = ("preset", "fix") + _COST_KEYS
    _reject_unknown(raw, allowed, path)
    preset = raw.get("preset")
    if preset is not None:
        preset = _as_choice(preset, ("coarse", "fine"), f"{path}.preset")
        base = COARSE_MULTIPLIERS if preset == "coarse" else FINE_MULTIPLIERS
    else:
        base = COARSE_MULTIPLIERS
    multipliers = {key: tuple(base) for key in _COST_KEYS}
    fixed = raw.get("fix", [])
    if fixed is not None and fixed != []:
        if not isinstance(fixed, list) or not all(isinstance(f, str) for f in fixed):
            raise ConfigError(f"{path}.fix: expected a list of cost keys")
        for name in fixed:
            if name not in _COST_KEYS:
                raise ConfigError(f"{path}.fix: unknown cost key {name!r}")
            multipliers[name] = (1.0,)
    for key in _COST_KEYS:
        if key in raw:
            values = raw[key]
            if not isinstance(values, list) or not values:
                raise ConfigError(f"{path}.{key}: expected a non-empty list of multipliers")
            multipliers[key] = tuple(_as_number(v, f"{path}.{key}[{i}]")
                                     for i, v in enumerate(values))
    return GridSpec(multipliers=multipliers)


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed YAML mapping into a RunConfig."""
    raw = _require_mapping(raw, "config")
    allowed = ("system", "mode", "goal", "n", "dt", "system-params", "costs",
               "solver", "seed", "init-bound", "out", "population-states", "grid")
    _reject_unknown(raw, allowed, "config")
    for req in ("system", "mode", "goal", "n"):
        if req not in raw:
            raise ConfigError(f"config.{req}: missing required key")

    system = _as_choice(raw["system"], _SYSTEMS, "config.system")
    mode = _as_choice(raw["mode"], MODES, "config.mode")
    goal = _as_choice(raw["goal"], _GOALS, "config.goal")
    n_steps = _as_int(raw["n"], "config.n")
    if n_steps < 2:
        raise ConfigError(f"config.n: must be at least 2, got {n_steps}")
    dt = _as_number(raw.get("dt", 0.5), "config.dt")
    if dt <= 0:
        raise ConfigError(f"config.dt: must be positive, got {dt}")

    goal_dims = {"x2": 2, "x3": 3, "cr4": 4, "cr9": 9}
    system_dims = {"1q2l": 2, "1q3l": 3, "2q2l": 4, "2q3l": 9}
    if goal_dims[goal] != system_dims[system]:
        raise ConfigError(
            f"config.goal: goal {goal!r} (dimension {goal_dims[goal]}) is incompatible"
            f" with system {system!r} (dimension {system_dims[system]})"
        )

    params_ghz = {}
    use_r2 = False
    if "system-params" in raw:
        sp = _require_mapping(raw["system-params"], "config.system-params")
        _reject_unknown(sp, list(_PARAM_KEYS) + ["use-r2-on-second-drive"],
                        "config.system-params")
        for key, target in _PARAM_KEYS.items():
            if key in sp:
                params_ghz[target] = _as_number(sp[key], f"config.system-params.{key}")
        if "use-r2-on-second-drive" in sp:
            use_r2 = _as_bool(sp["use-r2-on-second-drive"],
                              "config.system-params.use-r2-on-second-drive")

    costs = {"q-f": 100.0, "r-d": 1.0, "r-c": 0.1, "r-f": 1.0}
    if "costs" in raw:
        cm = _require_mapping(raw["costs"], "config.costs")
        _reject_unknown(cm, _COST_KEYS, "config.costs")
        for key in _COST_KEYS:
            if key in cm:
                costs[key] = _as_cost(cm[key], f"config.costs.{key}")

    solver = {}
    if "solver" in raw:
        sv = _require_mapping(raw["solver"], "config.solver")
        _reject_unknown(sv, _SOLVER_KEYS, "config.solver")
        for key in sv:
            path = f"config.solver.{key}"
            if key in ("max-iterations", "n-alphas"):
                value = _as_int(sv[key], path)
                if value < 1:
                    raise ConfigError(f"{path}: must be at least 1, got {value}")
            else:
                value = _as_number(sv[key], path)
                if value <= 0:
                    raise ConfigError(f"{path}: must be positive, got {value}")
            solver[key] = value

    seed = _as_int(raw.get("seed", 0), "config.seed")
    if seed < 0:
        raise ConfigError(f"config.seed: must be non-negative, got {seed}")
    init_bound = _as_number(raw.get("init-bound", 0.01), "config.init-bound")
    if init_bound < 0:
        raise ConfigError(f"config.init-bound: must be non-negative, got {init_bound}")

    out_dir = raw.get("out")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError(f"config.out: expected a path string, got {out_dir!r}")

    population_states = raw.get("population-states", [0])
    if (not isinstance(population_states, list) or not population_states
            or not all(isinstance(p, int) and not isinstance(p, bool) for p in population_states)):
        raise ConfigError("config.population-states: expected a non-empty list of basis indices")
    dim = system_dims[system]
    for p in population_states:
        if not 0 <= p < dim:
            raise ConfigError(
                f"config.population-states: index {p} outside the {dim}-dimensional basis"
            )

    grid = _parse_grid(raw["grid"], "config.grid") if "grid" in raw else None

    return RunConfig(system=system, mode=mode, goal=goal, n_steps=n_steps, dt=dt,
                     params_ghz=params_ghz, use_r2_on_second_drive=use_r2,
                     costs=costs, solver=solver, seed=seed, init_bound=init_bound,
                     out_dir=out_dir, population_states=population_states, grid=grid)


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration file."""
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: invalid YAML ({exc})") from exc
    if raw is None:
        raise ConfigError("config: file is empty")
    return parse_config(raw)
