"""Exception hierarchy shared across the engine."""


class DriftError(Exception):
    """Base class for every error raised by driftsearch."""


class ParseError(DriftError, ValueError):
    pass


class EmptyHistory(DriftError, ValueError):
    pass


class MissingPackage(DriftError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class StaleMutation(DriftError, ValueError):
    pass


class ContractViolation(DriftError, ValueError):
    pass


class WorldInconsistency(DriftError):
    pass


class BackendFailure(DriftError, RuntimeError):
    """The validator itself failed, as opposed to the snippet raising."""
