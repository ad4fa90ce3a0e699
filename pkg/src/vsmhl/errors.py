"""Shared exception types."""


class ValidationError(ValueError):
    """A model parameter or initial law violates one of its invariants."""


class ConfigurationError(ValueError):
    """An experiment or solver configuration cannot be run as requested."""


class DegenerateStateError(RuntimeError):
    """The simulated system reached an all-zero state and cannot continue."""


class GridMismatchError(ValueError):
    """Two measure paths do not share the same time grid."""
