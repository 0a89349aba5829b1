"""Exceptions and warning categories shared across the package."""


class PlanarTrapError(Exception):
    """Base class for all errors raised by this package."""


class UnstableRegion(PlanarTrapError):
    """Mathieu parameters outside the stable region (complex exponent)."""


class NonConvergence(PlanarTrapError):
    """An iterative solve hit its step or iteration cap before its tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CollisionDetected(PlanarTrapError):
    """Two ions approached closer than the hard-core guard distance."""


class CoincidentIons(PlanarTrapError):
    """Pairwise distance underflow while assembling coupling matrices."""


class ResonantDrive(PlanarTrapError):
    """A drive harmonic sits on a resonance of the driven Mathieu recurrence."""


class ImaginaryFrequency(PlanarTrapError):
    """A stiffness eigenvalue is negative: the crystal is transversely unstable."""


class AmbiguousMatching(PlanarTrapError):
    """Mode matching by overlap fell below the acceptable threshold."""


class InfeasiblePhase(PlanarTrapError):
    """No pulse direction attains a positive conditional phase."""


class TruncationTooSmall(PlanarTrapError):
    """Fock-space truncation leaves more thermal tail mass than tolerated."""


class Runaway(PlanarTrapError):
    """An integrated trajectory left the trapping region."""


class NoSettle(PlanarTrapError):
    """Damped integration failed to reach a periodic steady state in time."""


class ConfigError(PlanarTrapError):
    """Malformed or physically invalid run configuration."""


class PlanarityWarning(UserWarning):
    """Out-of-plane confinement is weak relative to in-plane; crystal may buckle."""


class LambDickeWarning(UserWarning):
    """A Lamb-Dicke factor is large enough to strain the linearized coupling."""
