"""Exception types shared across the engine."""


class ChainLabError(Exception):
    """Base class for all engine errors."""


class InvalidInput(ChainLabError):
    pass


class HypothesisViolation(ChainLabError):
    """A stated precondition of an operation fails; the message names the check."""


class NoConsistentLabeling(ChainLabError):
    pass


class InvalidComposition(ChainLabError):
    pass


class OrbitMismatch(ChainLabError):
    pass


class DisconnectedResult(ChainLabError):
    pass


class MissingData(ChainLabError):
    pass


class MissingOrbit(ChainLabError):
    pass


class NotAChainMap(ChainLabError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotFiltered(ChainLabError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class InvalidChart(ChainLabError):
    pass


class InvalidSubposet(ChainLabError):
    pass


class DiagramViolation(ChainLabError):
    pass


class NonTerminating(ChainLabError):
    pass
