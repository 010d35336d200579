"""Exception types shared across the package.

Integration aborts carry the partial trajectory produced so far (when one
exists) so callers can still write it out.
"""


class RadReactError(Exception):
    """Base class for all package errors."""


class NormalizationError(RadReactError):
    """A four-velocity does not satisfy the required unit-norm condition."""


class InsufficientSamples(RadReactError):
    """Too few samples on a curve for the requested derivative order."""


class NotTimelike(RadReactError):
    """A curve tangent is lightlike or spacelike where timelike is required."""


class NotMonotone(RadReactError):
    """A reparameterization map is not strictly increasing."""


class DomainBreach(RadReactError):
    """epsilon >= 1: the conformal metric is degenerate or has flipped sign."""


class DegenerateRegime(RadReactError):
    """A formula with 1/epsilon_dot was requested where epsilon_dot ~ 0."""


class RegimeViolation(RadReactError):
    """The uniform-acceleration force law was evaluated off its stratum."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ConfigError(RadReactError):
    """A run configuration violates a named invariant."""


class IntegrationAbort(RadReactError):
    """Base class for mid-run aborts; carries the partial trajectory."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class NoConvergence(IntegrationAbort):
    """An implicit solve (or step controller) failed to converge."""


class MaximalAccelBreach(IntegrationAbort):
    """eta(xddot, xddot) reached or exceeded A_max**2."""


class RunawayAbort(IntegrationAbort):
    """Acceleration grew past runaway_factor times its initial value."""
