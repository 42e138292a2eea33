"""Exception hierarchy shared across kvnlab."""


class KvnError(Exception):
    """Base class for every error raised by kvnlab."""


class DimensionMismatchError(KvnError, ValueError):
    pass


class BackendMismatchError(KvnError, TypeError):
    pass


class PreconditionError(KvnError, ValueError):
    """An operation's mathematical hypothesis does not hold."""


class NotOrderBoundedError(PreconditionError):
    pass


class NegativeInputError(PreconditionError):
    pass


class NotDensityZeroError(PreconditionError):
    pass


class ResidualNotVanishingError(PreconditionError):
    pass


class InvalidSystemError(PreconditionError):
    """The system fails the conditional-expectation-preserving checks."""


class NotWeaklyMixingError(PreconditionError):
    pass


class CapExceededError(KvnError, ValueError):
    pass


class ConfigError(KvnError, ValueError):
    """Malformed experiment configuration or input file."""
