"""Exception types shared across closurelab."""


class ClosureLabError(Exception):
    """Base class for all closurelab errors."""


class InputError(ClosureLabError, ValueError):
    """Malformed or out-of-contract input."""


class ResourceError(ClosureLabError, RuntimeError):
    """A configured guardrail (size cap, node budget) would be exceeded."""


class RealizabilityError(ClosureLabError):
    """A labeled sequence is not consistent with any member of the class."""
