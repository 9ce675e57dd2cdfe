"""Gauss-Newton trajectory optimizer (iLQR) over generic problem providers.

The solver alternates a value-function backward recursion with a
line-searched closed-loop forward rollout.  It is independent of the gate
synthesis machinery: any problem object exposing

    initial_state() -> z1
    step(z, v) -> z_next
    rollout(controls) -> Trajectory
    trajectory_cost(states, controls) -> float
    all_derivatives(states, controls) -> StageDerivatives

can be solved, which is also how the linear-quadratic reference instances
in the test suite are wired up.

Regularization adds mu to the control Hessian only; mu rises when a
factorization fails or a line search is exhausted and decays after every
accepted step.  A step is accepted when the realized cost decrease covers
a fixed fraction of the model decrease -(alpha*d1 + alpha^2/2 * d2), with
d1 = sum k^T Q_u and d2 = sum k^T Q_uu k.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory
from .exceptions import FactorizationFailure, NonFiniteCost, SingularDenominator

__all__ = [
    "SolverSettings",
    "StageDerivatives",
    "BackwardPassResult",
    "IterationRecord",
    "SolveReport",
    "backward_pass",
    "forward_pass",
    "solve",
]


@dataclass(frozen=True)
class SolverSettings:
    """Termination thresholds, regularization schedule and line-search shape."""

    max_iterations: int = 2000
    cost_tolerance: float = 1e-12
    gradient_tolerance: float = 1e-9
    mu_init: float = 1e-6
    mu_min: float = 1e-9
    mu_max: float = 1e10
    mu_scale: float = 10.0
    n_alphas: int = 11
    goldstein: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        for name in ("cost_tolerance", "gradient_tolerance", "mu_init", "mu_min", "mu_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.mu_scale <= 1:
            raise ValueError("mu_scale must exceed 1")
        if not 0 < self.goldstein < 1:
            raise ValueError("goldstein must lie in (0, 1)")
        if self.n_alphas < 1:
            raise ValueError("n_alphas must be at least 1")

    @property
    def alphas(self) -> np.ndarray:
        """Step-length schedule 1, 1/2, ..., strictly decreasing."""
        return 2.0 ** (-np.arange(self.n_alphas, dtype=np.float64))


@dataclass
class StageDerivatives:
    """Stacked stage Jacobians and cost derivatives along one trajectory.

    Arrays may be broadcast views (cost Hessians are typically constant
    across stages); consumers must not write into them.
    """

    f_x: np.ndarray   # (K, n, n)
    f_u: np.ndarray   # (K, n, m)
    l_x: np.ndarray   # (K, n)
    l_u: np.ndarray   # (K, m)
    l_xx: np.ndarray  # (K, n, n)
    l_uu: np.ndarray  # (K, m, m)
    l_ux: np.ndarray  # (K, m, n)
    lf_x: np.ndarray  # (n,)
    lf_xx: np.ndarray  # (n, n)

    @property
    def horizon(self) -> int:
        return self.f_x.shape[0]


@dataclass
class BackwardPassResult:
    """Gains and expected-improvement scalars from one backward recursion."""

    feedforward: np.ndarray  # (K, m)
    feedback: np.ndarray     # (K, m, n)
    delta1: float            # sum k^T Q_u  (<= 0 when the pass succeeds)
    delta2: float            # sum k^T Q_uu k
    grad_inf_norm: float     # max_k ||Q_u||_inf

    def expected_decrease(self, alpha: float) -> float:
        return -(alpha * self.delta1 + 0.5 * alpha * alpha * self.delta2)


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    grad_norm: float
    mu: float
    alpha: float | None
    wall_ms: float


@dataclass
class SolveReport:
    """Final trajectory plus the full iteration log and termination reason."""

    trajectory: Trajectory
    cost: float
    iterations: list[IterationRecord] = field(default_factory=list)
    termination: str = "max_iterations"
    fidelity: object | None = None

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)


def backward_pass(derivs: StageDerivatives, mu: float) -> BackwardPassResult:
    """Backward value recursion with mu added to the control Hessian.

    Positive definiteness of every regularized Q_uu is certified by a
    Cholesky factorization; failure raises FactorizationFailure so the
    caller can raise mu and retry.  Second-order dynamics terms are
    omitted (Gauss-Newton).
    """
    if mu < 0:
        raise ValueError("mu must be non-negative")
    horizon = derivs.horizon
    n = derivs.f_x.shape[1]
    m = derivs.f_u.shape[2]
    eye_m = np.eye(m)
    kappas = np.empty((horizon, m))
    gains = np.empty((horizon, m, n))
    v_x = derivs.lf_x.copy()
    v_xx = derivs.lf_xx.copy()
    delta1 = 0.0
    delta2 = 0.0
    grad = 0.0
    for k in range(horizon - 1, -1, -1):
        f_x = derivs.f_x[k]
        f_u = derivs.f_u[k]
        q_x = derivs.l_x[k] + f_x.T @ v_x
        q_u = derivs.l_u[k] + f_u.T @ v_x
        vxx_fx = v_xx @ f_x
        q_xx = derivs.l_xx[k] + f_x.T @ vxx_fx
        q_ux = derivs.l_ux[k] + f_u.T @ vxx_fx
        q_uu = derivs.l_uu[k] + f_u.T @ (v_xx @ f_u)
        q_uu_reg = q_uu + mu * eye_m
        try:
            np.linalg.cholesky(q_uu_reg)
        except np.linalg.LinAlgError as exc:
            raise FactorizationFailure(
                f"regularized control Hessian not positive definite at stage {k} (mu={mu:.3e})"
            ) from exc
        sol = np.linalg.solve(q_uu_reg, np.concatenate([q_u[:, None], q_ux], axis=1))
        kappa = -sol[:, 0]
        gain = -sol[:, 1:]
        kappas[k] = kappa
        gains[k] = gain
        v_x = q_x + gain.T @ q_u
        v_xx = q_xx + q_ux.T @ gain
        v_xx = 0.5 * (v_xx + v_xx.T)
        delta1 += kappa @ q_u
        delta2 += kappa @ (q_uu @ kappa)
        grad = max(grad, float(np.max(np.abs(q_u))))
    return BackwardPassResult(feedforward=kappas, feedback=gains,
                              delta1=float(delta1), delta2=float(delta2),
                              grad_inf_norm=grad)


def forward_pass(problem, traj: Trajectory, gains: BackwardPassResult, alpha: float):
    """Closed-loop rollout v_new = v + alpha*kappa + K (z_new - z).

    Returns the new trajectory and its total cost; a non-finite cost or
    state raises NonFiniteCost, which line searches treat as a rejection.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    states = traj.states
    controls = traj.controls
    horizon = controls.shape[0]
    new_states = np.empty_like(states)
    new_controls = np.empty_like(controls)
    new_states[0] = states[0]
    for k in range(horizon):
        dz = new_states[k] - states[k]
        new_controls[k] = controls[k] + alpha * gains.feedforward[k] + gains.feedback[k] @ dz
        new_states[k + 1] = problem.step(new_states[k], new_controls[k])
        if not np.isfinite(new_states[k + 1]).all():
            raise NonFiniteCost(f"state diverged at stage {k + 1}")
    cost = float(problem.trajectory_cost(new_states, new_controls))
    if not np.isfinite(cost):
        raise NonFiniteCost("rollout cost is not finite")
    new_traj = Trajectory(states=new_states, controls=new_controls,
                          dt=traj.dt, mode=traj.mode)
    return new_traj, cost


def solve(problem, initial_controls, settings: SolverSettings | None = None) -> SolveReport:
    """Run the full optimize loop from an initial control guess.

    Iterates derivative evaluation, regularized backward pass and a
    backtracking line search until the cost decrease, the control
    gradient, the regularization ceiling or the iteration budget ends the
    run.  Accepted costs are non-increasing by construction.  The run is
    deterministic: identical inputs reproduce the iteration log exactly.
    """
    settings = settings or SolverSettings()
    initial_controls = np.asarray(initial_controls, dtype=np.float64)
    traj = problem.rollout(initial_controls)
    cost = float(problem.trajectory_cost(traj.states, traj.controls))
    if not np.isfinite(cost):
        raise NonFiniteCost("initial rollout cost is not finite")
    mu = settings.mu_init
    records: list[IterationRecord] = []
    termination = "max_iterations"

    for iteration in range(1, settings.max_iterations + 1):
        t0 = time.perf_counter()
        derivs = problem.all_derivatives(traj.states, traj.controls)
        bp = None
        while bp is None:
            try:
                bp = backward_pass(derivs, mu)
            except FactorizationFailure:
                mu *= settings.mu_scale
                if mu > settings.mu_max:
                    records.append(IterationRecord(iteration, cost, np.nan, mu, None,
                                                   1e3 * (time.perf_counter() - t0)))
                    termination = "no_progress"
                    break
        if bp is None:
            break
        if bp.grad_inf_norm <= settings.gradient_tolerance:
            records.append(IterationRecord(iteration, cost, bp.grad_inf_norm, mu, None,
                                           1e3 * (time.perf_counter() - t0)))
            termination = "converged_gradient"
            break
        accepted = None
        for alpha in settings.alphas:
            expected = bp.expected_decrease(alpha)
            if expected <= 0.0:
                continue
            try:
                candidate, candidate_cost = forward_pass(problem, traj, bp, float(alpha))
            except (NonFiniteCost, SingularDenominator):
                continue
            if cost - candidate_cost >= settings.goldstein * expected:
                accepted = (float(alpha), candidate, candidate_cost)
                break
        wall_ms = 1e3 * (time.perf_counter() - t0)
        if accepted is None:
            mu *= settings.mu_scale
            records.append(IterationRecord(iteration, cost, bp.grad_inf_norm, mu, None, wall_ms))
            if mu > settings.mu_max:
                termination = "no_progress"
                break
            continue
        alpha, traj, new_cost = accepted
        decrease = cost - new_cost
        cost = new_cost
        mu = max(mu / settings.mu_scale, settings.mu_min)
        records.append(IterationRecord(iteration, cost, bp.grad_inf_norm, mu, alpha, wall_ms))
        if decrease <= settings.cost_tolerance:
            termination = "converged_cost"
            break

    report = SolveReport(trajectory=traj, cost=cost, iterations=records,
                         termination=termination)
    fidelity_fn = getattr(problem, "fidelity_report", None)
    if fidelity_fn is not None:
        report.fidelity = fidelity_fn(traj)
    return report
