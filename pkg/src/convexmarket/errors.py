"""Exception hierarchy shared by the engine, ledger and CLI."""


class MarketError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MarketError, ValueError):
    """Invalid market parameters or configuration document."""


class DimensionError(MarketError, ValueError):
    pass


class DomainError(MarketError, ValueError):
    """A point lies outside the domain of a conjugate function."""


class UndefinedGradient(DomainError):
    """The gradient of a conjugate diverges at the requested point."""


class SolverError(MarketError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class DepthUndefined(MarketError):
    """The cost function is not twice differentiable at the requested point."""


class EnumerationUnavailable(MarketError):
    """The outcome space is infinite or exceeds the enumeration cap."""


class InvalidOutcome(MarketError, ValueError):
    pass


class BundleError(MarketError, ValueError):
    """A bundle violates the market's trading rules (e.g. positive-only)."""


class SettlementError(MarketError):
    pass
