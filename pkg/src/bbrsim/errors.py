"""Exception types shared across the simulator."""


class BbrsimError(Exception):
    """Base class for all simulator errors."""


class DomainError(BbrsimError):
    """An input left the mathematical domain of an operation."""


class InvalidTxop(DomainError):
    """TXOP duration does not exceed the MU PHY overhead, so the
    aggregation budget is empty."""


class InvalidConfig(BbrsimError):
    """A configuration object violates one of its invariants."""


class NoConvergence(BbrsimError):
    """Iterative solver exhausted its iteration budget."""


class IntegratorPanic(BbrsimError):
    """Simulation state became non-finite; parameters are pathological."""


class ParseError(BbrsimError):
    """Scenario file is not well-formed JSON."""


class ValidationError(BbrsimError):
    """Scenario violates a schema constraint; message names the key."""


class UnknownKey(ValidationError):
    """Scenario contains a key outside the documented schema."""


class EmptyWindow(BbrsimError):
    """Requested steady-state window contains no trace samples."""
