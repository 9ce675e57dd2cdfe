"""Exception and warning types shared across the package."""


class PulseOptError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(PulseOptError):
    """Operands have incompatible dimensions."""


class BlockStructureViolation(PulseOptError):
    """A real matrix does not carry the [[Re, -Im], [Im, Re]] block structure."""


class SingularDenominator(PulseOptError):
    """The rational-approximant denominator is not invertible.

    Signals a generator-times-step norm far outside the approximant's
    validity range; reduce the step or raise the squaring depth.
    """


class FactorizationFailure(PulseOptError):
    """A regularized control Hessian failed its positive-definite factorization."""


class NonFiniteCost(PulseOptError):
    """A rollout produced a non-finite cost (numerical divergence)."""


class NonUnitaryInput(PulseOptError):
    """An operand expected to be unitary is not, within tolerance."""


class ConfigError(PulseOptError):
    """Invalid run configuration; the message names the offending field path."""


class UnitarityDrift(UserWarning):
    """The propagated state left the unitary manifold beyond the watch level."""
