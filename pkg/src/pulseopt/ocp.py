"""Quadratic costs, fidelity metrics and gate synthesis problem assembly.

The optimizer minimizes

    (x_N - x_g)^T Q_f (x_N - x_g) + u_N^T R_f u_N
        + sum_k [ v_k^T R_d v_k + u_k^T R_c u_k ]        (smoothed mode)

    (x_N - x_g)^T Q_f (x_N - x_g) + sum_k v_k^T R_c v_k  (direct mode)

with diagonal weight matrices throughout.  The reported gate error is the
phase-invariant trace infidelity 1 - |tr(U_g^dag U_N)|^2 / d^2, kept
separate from the phase-sensitive quadratic objective above: the goal
unitaries carry fixed global phases, so the two must not be conflated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import Dynamics, Trajectory
from .exceptions import DimensionMismatch, NonUnitaryInput
from .solver import StageDerivatives
from .transmon import GoalGate

__all__ = [
    "CostMatrices",
    "CostDerivatives",
    "FidelityReport",
    "stage_cost",
    "final_cost",
    "fidelity",
    "GateSynthesisProblem",
]

UNITARY_TOL = 1e-6


def _diagonal(values, size: int, name: str, positive: bool = False) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise DimensionMismatch(f"{name} must be a scalar or length-{size} diagonal, got {arr.shape}")
    if positive:
        if np.any(arr <= 0):
            raise ValueError(f"{name} must be positive definite (all entries > 0)")
    elif np.any(arr < 0):
        raise ValueError(f"{name} must be positive semidefinite (no negative entries)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CostMatrices:
    """Diagonals of the four quadratic weights.

    q_f weighs the final-unitary mismatch (length 2d^2), r_d the envelope
    rate of change (positive definite), r_c the envelope amplitude and
    r_f the final envelope value (each length m).
    """

    q_f: np.ndarray
    r_d: np.ndarray
    r_c: np.ndarray
    r_f: np.ndarray

    @classmethod
    def build(cls, n_unitary: int, n_controls: int, q_f=100.0, r_d=1.0, r_c=0.1, r_f=1.0):
        """Accepts scalars (uniform diagonal) or full diagonal vectors."""
        return cls(
            q_f=_diagonal(q_f, n_unitary, "q_f"),
            r_d=_diagonal(r_d, n_controls, "r_d", positive=True),
            r_c=_diagonal(r_c, n_controls, "r_c"),
            r_f=_diagonal(r_f, n_controls, "r_f"),
        )

    def scaled(self, m_qf: float, m_rd: float, m_rc: float, m_rf: float) -> "CostMatrices":
        """Grid-search cell: each diagonal multiplied by its cell factor."""
        return replace(self, q_f=_diagonal(self.q_f * m_qf, len(self.q_f), "q_f"),
                       r_d=_diagonal(self.r_d * m_rd, len(self.r_d), "r_d", positive=True),
                       r_c=_diagonal(self.r_c * m_rc, len(self.r_c), "r_c"),
                       r_f=_diagonal(self.r_f * m_rf, len(self.r_f), "r_f"))


@dataclass(frozen=True)
class CostDerivatives:
    """Value and derivatives of a stage or final cost at one point."""

    value: float
    l_x: np.ndarray
    l_u: np.ndarray
    l_xx: np.ndarray
    l_uu: np.ndarray
    l_ux: np.ndarray


@dataclass(frozen=True)
class FidelityReport:
    """Phase-sensitive quadratic mismatch and phase-invariant gate error."""

    frobenius_cost: float
    trace_infidelity: float


def _split(z: np.ndarray, n_unitary: int, mode: str):
    if mode == "smoothed":
        return z[:n_unitary], z[n_unitary:]
    return z, None


def stage_cost(z, v, costs: CostMatrices, mode: str) -> CostDerivatives:
    """Running cost with exact derivatives; l_ux vanishes for these costs."""
    z = np.asarray(z, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    m = len(costs.r_d)
    if v.shape != (m,):
        raise DimensionMismatch(f"control must have shape ({m},), got {v.shape}")
    n = z.shape[0]
    l_x = np.zeros(n)
    l_xx = np.zeros((n, n))
    l_ux = np.zeros((m, n))
    if mode == "smoothed":
        n_unitary = n - m
        if n_unitary != len(costs.q_f):
            raise DimensionMismatch(
                f"state length {n} does not match cost dimensions ({len(costs.q_f)} + {m})"
            )
        env = z[n_unitary:]
        value = float(v @ (costs.r_d * v) + env @ (costs.r_c * env))
        l_x[n_unitary:] = 2.0 * costs.r_c * env
        l_xx[n_unitary:, n_unitary:] = np.diag(2.0 * costs.r_c)
        l_u = 2.0 * costs.r_d * v
        l_uu = np.diag(2.0 * costs.r_d)
    else:
        if n != len(costs.q_f):
            raise DimensionMismatch(f"state length {n} does not match q_f ({len(costs.q_f)})")
        value = float(v @ (costs.r_c * v))
        l_u = 2.0 * costs.r_c * v
        l_uu = np.diag(2.0 * costs.r_c)
    return CostDerivatives(value, l_x, l_u, l_xx, l_uu, l_ux)


def final_cost(z_n, goal: GoalGate, costs: CostMatrices, mode: str = "smoothed") -> CostDerivatives:
    """Terminal cost with exact derivatives (control blocks are zero)."""
    z_n = np.asarray(z_n, dtype=np.float64)
    n = z_n.shape[0]
    m = len(costs.r_d)
    n_unitary = len(costs.q_f)
    expected = n_unitary + (m if mode == "smoothed" else 0)
    if n != expected:
        raise DimensionMismatch(f"state length {n} does not match cost dimensions ({expected})")
    if goal.vector.shape != (n_unitary,):
        raise DimensionMismatch(
            f"goal dimension {goal.vector.shape} does not match q_f ({n_unitary})"
        )
    diff = z_n[:n_unitary] - goal.vector
    value = float(diff @ (costs.q_f * diff))
    l_x = np.zeros(n)
    l_x[:n_unitary] = 2.0 * costs.q_f * diff
    l_xx = np.zeros((n, n))
    l_xx[:n_unitary, :n_unitary] = np.diag(2.0 * costs.q_f)
    if mode == "smoothed":
        env = z_n[n_unitary:]
        value += float(env @ (costs.r_f * env))
        l_x[n_unitary:] = 2.0 * costs.r_f * env
        l_xx[n_unitary:, n_unitary:] = np.diag(2.0 * costs.r_f)
    return CostDerivatives(value, l_x, np.zeros(m), l_xx, np.zeros((m, m)), np.zeros((m, n)))


def fidelity(u_final, goal: GoalGate, weights=None) -> FidelityReport:
    """Both gate-error measures for a final unitary against the goal.

    The Frobenius cost is (x_N - x_g)^T W (x_N - x_g) with W defaulting to
    the identity; the trace infidelity ignores any global phase of either
    argument.  Inputs must be unitary within tolerance.
    """
    u_final = np.asarray(u_final, dtype=np.complex128)
    d = goal.dim
    if u_final.shape != (d, d):
        raise DimensionMismatch(f"expected a {d} x {d} unitary, got shape {u_final.shape}")
    for label, u in (("candidate", u_final), ("goal", goal.unitary)):
        err = np.max(np.abs(u.conj().T @ u - np.eye(d)))
        if err > UNITARY_TOL:
            raise NonUnitaryInput(f"{label} deviates from unitarity by {err:.3e}")
    diff = np.concatenate([(u_final - goal.unitary).real.ravel(),
                           (u_final - goal.unitary).imag.ravel()])
    if weights is None:
        frob = float(diff @ diff)
    else:
        w = _diagonal(weights, 2 * d * d, "weights")
        frob = float(diff @ (w * diff))
    overlap = np.trace(goal.unitary.conj().T @ u_final)
    infid = 1.0 - (abs(overlap) ** 2) / (d * d)
    return FidelityReport(frobenius_cost=frob, trace_infidelity=float(infid))


class GateSynthesisProblem:
    """Bundles dynamics, costs and a goal gate into the solver interface.

    The horizon is given as the number of piecewise-constant time steps,
    so a rollout holds n_steps + 1 states and n_steps stage controls.
    """

    def __init__(self, dynamics: Dynamics, costs: CostMatrices, goal: GoalGate,
                 n_steps: int):
        if goal.dim != dynamics.dim:
            raise DimensionMismatch(
                f"goal dimension {goal.dim} does not match system dimension {dynamics.dim}"
            )
        if len(costs.q_f) != dynamics.n_unitary or len(costs.r_d) != dynamics.n_controls:
            raise DimensionMismatch("cost diagonals do not match the system dimensions")
        if n_steps < 1:
            raise ValueError(f"n_steps must be at least 1, got {n_steps}")
        self.dynamics = dynamics
        self.costs = costs
        self.goal = goal
        self.n_steps = n_steps
        self.mode = dynamics.mode

    @property
    def n_controls(self) -> int:
        return self.dynamics.n_controls

    @property
    def n_state(self) -> int:
        return self.dynamics.n_state

    # -- solver interface -------------------------------------------------------

    def initial_state(self) -> np.ndarray:
        return self.dynamics.initial_state()

    def step(self, z, v) -> np.ndarray:
        return self.dynamics.step(z, v)

    def rollout(self, controls) -> Trajectory:
        controls = np.asarray(controls, dtype=np.float64)
        if controls.shape != (self.n_steps, self.n_controls):
            raise DimensionMismatch(
                f"expected controls of shape ({self.n_steps}, {self.n_controls}),"
                f" got {controls.shape}"
            )
        return self.dynamics.rollout(self.initial_state(), controls)

    def trajectory_cost(self, states: np.ndarray, controls: np.ndarray) -> float:
        c = self.costs
        n_u = self.dynamics.n_unitary
        diff = states[-1, :n_u] - self.goal.vector
        total = float(diff @ (c.q_f * diff))
        if self.mode == "smoothed":
            envs = states[:-1, n_u:]
            env_n = states[-1, n_u:]
            total += float(np.einsum("km,m,km->", controls, c.r_d, controls))
            total += float(np.einsum("km,m,km->", envs, c.r_c, envs))
            total += float(env_n @ (c.r_f * env_n))
        else:
            total += float(np.einsum("km,m,km->", controls, c.r_c, controls))
        return total

    def all_derivatives(self, states: np.ndarray, controls: np.ndarray) -> StageDerivatives:
        f_x, f_u = self.dynamics.all_jacobians(states, controls)
        k = controls.shape[0]
        n, m = self.n_state, self.n_controls
        n_u = self.dynamics.n_unitary
        c = self.costs
        l_x = np.zeros((k, n))
        lf_x = np.zeros(n)
        lf_xx = np.zeros((n, n))
        diff = states[-1, :n_u] - self.goal.vector
        lf_x[:n_u] = 2.0 * c.q_f * diff
        lf_xx[:n_u, :n_u] = np.diag(2.0 * c.q_f)
        if self.mode == "smoothed":
            l_x[:, n_u:] = 2.0 * c.r_c * states[:k, n_u:]
            l_u = 2.0 * c.r_d * controls
            l_uu = np.diag(2.0 * c.r_d)
            l_xx = np.zeros((n, n))
            l_xx[n_u:, n_u:] = np.diag(2.0 * c.r_c)
            lf_x[n_u:] = 2.0 * c.r_f * states[-1, n_u:]
            lf_xx[n_u:, n_u:] = np.diag(2.0 * c.r_f)
        else:
            l_u = 2.0 * c.r_c * controls
            l_uu = np.diag(2.0 * c.r_c)
            l_xx = np.zeros((n, n))
        return StageDerivatives(
            f_x=f_x, f_u=f_u,
            l_x=l_x, l_u=l_u,
            l_xx=np.broadcast_to(l_xx, (k, n, n)),
            l_uu=np.broadcast_to(l_uu, (k, m, m)),
            l_ux=np.broadcast_to(np.zeros((m, n)), (k, m, n)),
            lf_x=lf_x, lf_xx=lf_xx,
        )

    # -- reporting ---------------------------------------------------------------

    def final_unitary(self, traj: Trajectory) -> np.ndarray:
        return self.dynamics.unitary(traj.states[-1])

    def fidelity_report(self, traj: Trajectory) -> FidelityReport:
        return fidelity(self.final_unitary(traj), self.goal)
