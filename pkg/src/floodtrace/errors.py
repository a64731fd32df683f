"""Exception types raised across the simulator."""


class SimError(Exception):
    """Base class for simulator errors."""


class EngineFinished(SimError):
    pass


# topology
class TopologyError(SimError):
    pass


class DuplicateNodeId(TopologyError):
    pass


class DanglingLink(TopologyError):
    pass


class AddressCollision(TopologyError):
    pass


class UnknownOrigin(SimError):
    pass


# botnet
class NoBots(SimError):
    pass


class ChannelDown(SimError):
    pass


class NotController(SimError):
    pass


class InvalidTransition(SimError):
    pass


# itm / data center
class RejectedBlocked(SimError):
    pass


class RejectedUnregistered(SimError):
    pass


class AlreadyBlocked(SimError):
    pass


class UnknownMonitor(SimError):
    pass


# honeypot / traceback
class ConsoleUnreachable(SimError):
    pass


class PpmIncomplete(SimError):
    """Raised when the collected marks do not cover every hop.

    The partial reconstruction is available as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


# scenarios
class ParseError(SimError):
    def __init__(self, message, line=None, column=None, field=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.field = field


class ScenarioValidationError(SimError):
    def __init__(self, message, constraint=None, errors=None):
        super().__init__(message)
        self.constraint = constraint
        self.errors = errors or []


class UnknownParameter(SimError):
    pass
