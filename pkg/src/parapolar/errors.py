"""Exception hierarchy.

Everything raised on purpose by this package derives from ParapolarError so
callers can catch one type at the CLI boundary.
"""


class ParapolarError(Exception):
    pass


class DomainError(ParapolarError, ValueError):
    """An argument is outside the documented domain of an operation."""


class ScopeError(ParapolarError, ValueError):
    """The request is out of scope for this code path (e.g. sum rate <= 1
    asked of the multilevel decomposition; use the binary path instead)."""


class ConfigurationError(ParapolarError, ValueError):
    """Inconsistent configuration, e.g. a known bit conflicting with a frozen
    value, or payload sizes that do not match the rate table."""


class ConstructionError(ParapolarError, RuntimeError):
    """A construction procedure (tiering, ordering search) failed; the message
    carries the diagnostic (first violated index set, failing composition)."""


class InfeasibleRateError(ParapolarError, ValueError):
    """A rate budget exceeds what the channel decomposition can carry."""


class PipelineOrderError(ParapolarError, RuntimeError):
    """A decode task ran before its cancellation dependencies were available."""
