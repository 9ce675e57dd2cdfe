"""Discrete-time dynamics driving the optimizer, in two control modes.

direct:   the optimizer's controls are the pulse envelopes themselves and
          the state is the flattened unitary (length 2d^2).
smoothed: the optimizer's controls are envelope derivatives; the envelope
          values join the state, which becomes [flattened unitary, envelope]
          of length 2d^2 + m.  The unitary advances with the envelope held
          in the state, then the envelope takes the Euler update
          u_next = u + v * dt.

Either way one step left-multiplies the flattened unitary by the embedded
step propagator, so the stage map is linear in the unitary block and the
Jacobians assemble exactly from the propagator and its channel derivatives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, UnitarityDrift
from .iso import _apply, devectorize_unitary, vectorize_unitary
from .propagator import step_propagators
from .transmon import TransmonSystem, iso_generator

__all__ = ["MODES", "StageJacobians", "Trajectory", "Dynamics"]

MODES = ("direct", "smoothed")

# Rollouts warn when the propagated unitary leaves the manifold by more
# than this (max-abs of U^dag U - 1).
DRIFT_WARN_LEVEL = 1e-6


@dataclass(frozen=True)
class StageJacobians:
    """Exact derivatives f_x, f_u of one step of the implemented map."""

    f_x: np.ndarray
    f_u: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """States z_1..z_N and stage controls v_1..v_{N-1} linked by the step map."""

    states: np.ndarray
    controls: np.ndarray
    dt: float
    mode: str
    unitarity_drift: float | None = None

    @property
    def n_states(self) -> int:
        return self.states.shape[0]


class Dynamics:
    """Step map, rollouts and stage Jacobians for one system and mode."""

    def __init__(self, system: TransmonSystem, mode: str, scaling="auto"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.system = system
        self.mode = mode
        self.scaling = scaling
        self.generator = iso_generator(system)
        self.dim = system.dim
        self.n_unitary = 2 * system.dim ** 2
        self.n_controls = system.n_controls
        self.n_state = self.n_unitary + (self.n_controls if mode == "smoothed" else 0)
        self.dt = system.dt
        self._fx_cache = None  # reused across all_jacobians calls (hot path)

    # -- state layout helpers -------------------------------------------------

    def initial_state(self) -> np.ndarray:
        """Identity unitary; in smoothed mode the envelope starts at zero."""
        z = np.zeros(self.n_state)
        z[: self.n_unitary] = vectorize_unitary(np.eye(self.dim))
        return z

    def envelope(self, z: np.ndarray) -> np.ndarray:
        """Envelope part of the state (smoothed mode only)."""
        if self.mode != "smoothed":
            raise ValueError("envelope is part of the state only in smoothed mode")
        return z[self.n_unitary:]

    def unitary(self, z: np.ndarray) -> np.ndarray:
        return devectorize_unitary(z[: self.n_unitary], self.dim)

    def unitaries(self, states: np.ndarray) -> np.ndarray:
        xs = states[:, : self.n_unitary].reshape(-1, 2, self.dim, self.dim)
        return xs[:, 0] + 1j * xs[:, 1]

    def unitarity_drift(self, states: np.ndarray) -> float:
        """Largest max-abs deviation of U^dag U from the identity."""
        us = self.unitaries(states)
        gram = np.einsum("kji,kjl->kil", us.conj(), us)
        gram -= np.eye(self.dim)
        return float(np.max(np.abs(gram)))

    def _check(self, z: np.ndarray, v: np.ndarray):
        if z.shape != (self.n_state,):
            raise DimensionMismatch(f"state must have shape ({self.n_state},), got {z.shape}")
        if v.shape != (self.n_controls,):
            raise DimensionMismatch(
                f"control must have shape ({self.n_controls},), got {v.shape}"
            )

    def _drive(self, z: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Envelope that parameterizes this step's propagator."""
        return v if self.mode == "direct" else z[self.n_unitary:]

    # -- the step map and its derivatives --------------------------------------

    def step(self, z, v) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        self._check(z, v)
        p, _ = step_propagators(self.generator, self._drive(z, v)[None], self.dt,
                                scaling=self.scaling, with_derivatives=False)
        out = np.empty_like(z)
        out[: self.n_unitary] = _apply(p[0], z[: self.n_unitary], self.dim)
        if self.mode == "smoothed":
            out[self.n_unitary:] = z[self.n_unitary:] + v * self.dt
        return out

    def stage_jacobians(self, z, v) -> StageJacobians:
        z = np.asarray(z, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        self._check(z, v)
        f_x, f_u = self.all_jacobians(z[None], v[None])
        return StageJacobians(f_x=f_x[0], f_u=f_u[0])

    def _fx_buffer(self, k: int) -> np.ndarray:
        """Preallocated f_x stack; constant blocks are filled once."""
        if self._fx_cache is None or self._fx_cache.shape[0] != k:
            f_x = np.zeros((k, self.n_state, self.n_state))
            if self.mode == "smoothed":
                n_u = self.n_unitary
                f_x[:, n_u:, n_u:] = np.eye(self.n_controls)
            self._fx_cache = f_x
        return self._fx_cache

    def all_jacobians(self, states: np.ndarray, controls: np.ndarray):
        """Stacked (f_x, f_u) for every stage of a trajectory.

        states may include the final state; only the first len(controls)
        rows are used.  Stages are independent, so the result does not
        depend on batching.  The returned arrays are reused by the next
        call; copy them if they must outlive it.
        """
        k = controls.shape[0]
        drives = controls if self.mode == "direct" else states[:k, self.n_unitary:]
        p, dp = step_propagators(self.generator, drives, self.dt, scaling=self.scaling)
        n_u, d, m = self.n_unitary, self.dim, self.n_controls
        tall = states[:k, :n_u].reshape(k, 2 * d, d)
        dp_x = np.matmul(dp, tall[:, None]).reshape(k, m, n_u)
        f_x = self._fx_buffer(k)
        # Left-multiplication by P acts on the flattened unitary as P (x) 1_d:
        # entry [(a d + i), (b d + j)] is P[a, b] delta_ij.
        for i in range(d):
            f_x[:, i:n_u:d, i:n_u:d] = p
        if self.mode == "direct":
            return f_x, dp_x.transpose(0, 2, 1).copy()
        f_x[:, :n_u, n_u:] = dp_x.transpose(0, 2, 1)
        f_u = np.zeros((k, self.n_state, m))
        f_u[:, n_u:, :] = self.dt * np.eye(m)
        return f_x, f_u

    # -- rollouts ---------------------------------------------------------------

    def rollout(self, z1, controls) -> Trajectory:
        """Shoot the step map from z1 through every stage control.

        The returned trajectory satisfies z_{k+1} = step(z_k, v_k) exactly
        by construction and carries the observed unitarity drift; drift
        beyond the watch level raises a UnitarityDrift warning (not fatal).
        """
        z1 = np.asarray(z1, dtype=np.float64)
        controls = np.asarray(controls, dtype=np.float64)
        if controls.ndim != 2 or controls.shape[1] != self.n_controls:
            raise DimensionMismatch(
                f"controls must have shape (K, {self.n_controls}), got {controls.shape}"
            )
        states = np.empty((controls.shape[0] + 1, self.n_state))
        states[0] = z1
        for k in range(controls.shape[0]):
            states[k + 1] = self.step(states[k], controls[k])
        drift = self.unitarity_drift(states)
        if drift > DRIFT_WARN_LEVEL:
            warnings.warn(
                f"unitarity drift {drift:.3e} exceeds {DRIFT_WARN_LEVEL:.1e}",
                UnitarityDrift,
            )
        return Trajectory(states=states, controls=controls, dt=self.dt,
                          mode=self.mode, unitarity_drift=drift)
