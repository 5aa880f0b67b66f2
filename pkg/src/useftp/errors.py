"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Malformed or out-of-contract input."""


class SceneViolationError(ValueError):
    """A scale-invariant objective was asked to score a silent target.

    Target-silent spans must be routed to the power loss instead.
    """


class InfeasibleOverlapError(ValueError):
    """The requested speaker overlap cannot be placed inside the clip."""


class UndefinedMetricError(ValueError):
    """A metric has no defined value for the given input (e.g. DER without reference speech)."""


class DegenerateProjectionError(ValueError):
    """The SDR distortion-filter projection is singular."""
