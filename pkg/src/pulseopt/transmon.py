"""Rotating-frame transmon models, drive channels and goal gates.

Covers one or two fixed-frequency transmons truncated to two or three
oscillator levels.  All frequencies are stored as angular rates in
rad/ns (2*pi times the GHz calibration values); time is in ns and the
drive amplitudes are dimensionless, so phases like r1 * u * dt come out
in radians directly.

In the frame rotating at the first transmon's dressed frequency the
drift is the anharmonic ladder term (plus detuning and exchange coupling
for two transmons), and each drive quadrature enters linearly:
(r/2) * (b^dag + b) for the in-phase channel and (r/2) * i(b^dag - b)
for the off-phase channel.  Channel order is (X1, Y1[, X2, Y2]).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DimensionMismatch
from .iso import vectorize_unitary
from .propagator import AffineGenerator

__all__ = [
    "TABLE_PARAMS_GHZ",
    "TransmonSystem",
    "LadderOperators",
    "GoalGate",
    "make_system",
    "ladder_operators",
    "site_ladder_operators",
    "drift_hamiltonian",
    "control_hamiltonians",
    "goal_gate",
    "iso_generator",
]

# Calibration of the two-transmon device (GHz; dt in ns).
TABLE_PARAMS_GHZ = {
    "omega1": 4.7219,
    "omega2": 4.8151,
    "delta1": -0.3120,
    "delta2": -0.3097,
    "j12": 0.0020,
    "r1": 0.0921,
    "r2": 0.0974,
}

DEFAULT_DT_NS = 0.5

_PRESETS = {
    "1q2l": (1, 2),
    "1q3l": (1, 3),
    "2q2l": (2, 2),
    "2q3l": (2, 3),
}


@dataclass(frozen=True)
class TransmonSystem:
    """Physical parameters of the simulated device, in angular units."""

    levels: int
    n_transmons: int
    omega1: float  # rad/ns
    omega2: float
    delta1: float
    delta2: float
    j12: float
    r1: float
    r2: float
    dt: float  # ns
    use_r2_on_second_drive: bool = False

    def __post_init__(self):
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.n_transmons not in (1, 2):
            raise ValueError(f"n_transmons must be 1 or 2, got {self.n_transmons}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def dim(self) -> int:
        """Total Hilbert-space dimension."""
        return self.levels ** self.n_transmons

    @property
    def n_controls(self) -> int:
        """Two quadrature channels per driven transmon."""
        return 2 * self.n_transmons

    @property
    def detuning21(self) -> float:
        return self.omega2 - self.omega1

    @property
    def channel_names(self) -> tuple[str, ...]:
        return ("x1", "y1", "x2", "y2")[: self.n_controls]


@dataclass(frozen=True)
class LadderOperators:
    """Annihilation/creation pair, possibly embedded in a product space."""

    lower: np.ndarray
    raise_: np.ndarray


@dataclass(frozen=True)
class GoalGate:
    """Target unitary and its flattened image used by the final cost."""

    name: str
    unitary: np.ndarray
    vector: np.ndarray

    def __post_init__(self):
        u = np.array(self.unitary, dtype=np.complex128, copy=True)
        u.setflags(write=False)
        object.__setattr__(self, "unitary", u)
        v = np.array(self.vector, dtype=np.float64, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]


def make_system(name: str, dt: float = DEFAULT_DT_NS, params_ghz: dict | None = None,
                use_r2_on_second_drive: bool = False) -> TransmonSystem:
    """Build a system preset ('1q2l', '1q3l', '2q2l', '2q3l') from GHz values."""
    key = name.lower()
    if key not in _PRESETS:
        raise ValueError(f"unknown system {name!r}; expected one of {sorted(_PRESETS)}")
    n_transmons, levels = _PRESETS[key]
    ghz = dict(TABLE_PARAMS_GHZ)
    if params_ghz:
        unknown = set(params_ghz) - set(ghz)
        if unknown:
            raise ValueError(f"unknown physical parameters: {sorted(unknown)}")
        ghz.update(params_ghz)
    angular = {k: 2.0 * np.pi * v for k, v in ghz.items()}
    return TransmonSystem(levels=levels, n_transmons=n_transmons, dt=dt,
                          use_r2_on_second_drive=use_r2_on_second_drive, **angular)


def ladder_operators(levels: int) -> LadderOperators:
    """Truncated harmonic-oscillator ladder: lower @ |n> = sqrt(n) |n-1>."""
    lower = np.diag(np.sqrt(np.arange(1, levels, dtype=np.float64)), 1).astype(np.complex128)
    return LadderOperators(lower=lower, raise_=lower.conj().T)


def site_ladder_operators(sys: TransmonSystem) -> list[LadderOperators]:
    """Per-transmon ladder operators embedded in the full product space.

    Transmon 1 is the left (most significant) tensor factor, so the basis
    index of |n1 n2> is levels * n1 + n2.
    """
    single = ladder_operators(sys.levels)
    if sys.n_transmons == 1:
        return [single]
    eye = np.eye(sys.levels, dtype=np.complex128)
    return [
        LadderOperators(np.kron(single.lower, eye), np.kron(single.raise_, eye)),
        LadderOperators(np.kron(eye, single.lower), np.kron(eye, single.raise_)),
    ]


def drift_hamiltonian(sys: TransmonSystem) -> np.ndarray:
    """Control-independent part of the rotating-frame Hamiltonian."""
    sites = site_ladder_operators(sys)
    deltas = (sys.delta1, sys.delta2)
    h = np.zeros((sys.dim, sys.dim), dtype=np.complex128)
    for ops, delta in zip(sites, deltas):
        number = ops.raise_ @ ops.lower
        h += 0.5 * delta * number @ (number - np.eye(sys.dim))
    if sys.n_transmons == 2:
        b1, b2 = sites
        h += sys.detuning21 * (b2.raise_ @ b2.lower)
        h += sys.j12 * (b1.raise_ @ b2.lower + b1.lower @ b2.raise_)
    return h


def control_hamiltonians(sys: TransmonSystem) -> list[np.ndarray]:
    """Per-channel drive terms dH/du, ordered (X1, Y1[, X2, Y2]).

    Both transmons are driven with the first transmon's Rabi strength,
    matching the rotating-frame model as written; set
    ``use_r2_on_second_drive`` to scale channels X2/Y2 by r2 instead.
    """
    sites = site_ladder_operators(sys)
    out = []
    for j, ops in enumerate(sites):
        rabi = sys.r1
        if j == 1 and sys.use_r2_on_second_drive:
            rabi = sys.r2
        out.append(0.5 * rabi * (ops.raise_ + ops.lower))
        out.append(0.5 * rabi * 1j * (ops.raise_ - ops.lower))
    return out


def _x3_unitary() -> np.ndarray:
    u = np.zeros((3, 3), dtype=np.complex128)
    u[0, 1] = u[1, 0] = 1j
    u[2, 2] = 1.0
    return u


def _cr4_unitary() -> np.ndarray:
    # exp(-i pi/4 X (x) Z); (X (x) Z)^2 = 1 collapses the series to cos/sin.
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
    sz = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=np.complex128)
    xz = np.kron(sx, sz)
    return (np.eye(4) - 1j * xz) / np.sqrt(2.0)


def _cr9_unitary() -> np.ndarray:
    u = np.zeros((9, 9), dtype=np.complex128)
    inv = 1.0 / np.sqrt(2.0)
    for j in (0, 1, 3, 4):
        u[j, j] = inv
    for j in (2, 5, 6, 7, 8):
        u[j, j] = 1.0
    u[3, 0] = u[0, 3] = -1j * inv
    u[4, 1] = u[1, 4] = 1j * inv
    return u


_GOALS = {
    "x2": (2, lambda: 1j * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)),
    "x3": (3, _x3_unitary),
    "cr4": (4, _cr4_unitary),
    "cr9": (9, _cr9_unitary),
}


def goal_gate(name: str, sys: TransmonSystem) -> GoalGate:
    """Goal unitary by name (X2, X3, CR4, CR9) for a compatible system."""
    key = name.lower()
    if key not in _GOALS:
        raise ValueError(f"unknown goal {name!r}; expected one of {sorted(_GOALS)}")
    dim, build = _GOALS[key]
    if dim != sys.dim:
        raise DimensionMismatch(
            f"goal {name} has dimension {dim} but the system has dimension {sys.dim}"
        )
    u = build()
    return GoalGate(name=key, unitary=u, vector=vectorize_unitary(u))


def _iso_of_minus_i(h: np.ndarray) -> np.ndarray:
    # Embedded image of -i H: [[Im H, Re H], [-Re H, Im H]]; skew-symmetric
    # whenever H is Hermitian.
    re, im = h.real, h.imag
    return np.block([[im, re], [-re, im]])


def iso_generator(sys: TransmonSystem) -> AffineGenerator:
    """Affine map u -> embedded -i H(u) feeding the step propagator."""
    drift = _iso_of_minus_i(drift_hamiltonian(sys))
    channels = np.stack([_iso_of_minus_i(h) for h in control_hamiltonians(sys)])
    return AffineGenerator(dim=sys.dim, drift=drift, channels=channels)


def with_overrides(sys: TransmonSystem, **kwargs) -> TransmonSystem:
    """Copy of the system with individual angular parameters replaced."""
    return replace(sys, **kwargs)
