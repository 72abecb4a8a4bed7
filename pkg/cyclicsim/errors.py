"""
Exception hierarchy for cyclicsim.

Every error a public operation can raise derives from CyclicSimError so the
CLI can map the whole family onto exit codes in one place.
"""
from typing import Optional


class CyclicSimError(Exception):
    """Base class for all cyclicsim errors."""


class InvalidParameter(CyclicSimError, ValueError):
    """A generator or operation received a parameter outside its domain."""


class ValidationError(CyclicSimError, ValueError):
    """A scenario, graph or flow set violates a static invariant."""


# topology

class DuplicateNodeId(ValidationError):
    pass


class DanglingLinkEndpoint(ValidationError):
    pass


class DisconnectedGraph(ValidationError):
    pass


class EndStationDegreeViolation(ValidationError):
    pass


class GenerationFailed(CyclicSimError):
    """A randomized generator exhausted its retry budget."""


class NoPath(CyclicSimError):
    pass


class ParseError(CyclicSimError):
    """A topology or scenario document could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        self.line = line
        self.path = path
        location = ""
        if path:
            location = f"{path}"
        if line is not None:
            location = f"{location}:{line}" if location else f"line {line}"
        super().__init__(f"{location}: {message}" if location else message)


# traffic

class EmptyFlowSet(ValidationError):
    pass


class HypercycleOverflow(ValidationError):
    pass


class UnknownFlowId(ValidationError):
    pass


class OffsetConstraintViolation(ValidationError):
    pass


# shaper

class UnknownGroup(ValidationError):
    pass


class MissingQid(ValidationError):
    pass


class QueueOverflow(CyclicSimError):
    """Raised by enqueue when Q_free is smaller than the frame's cost."""


# engine / analysis / kpi

class UnknownHop(CyclicSimError):
    pass


class MissingFlow(CyclicSimError):
    pass


class MismatchedFlowSets(CyclicSimError):
    pass


class ExportError(CyclicSimError):
    """Writing or reading a result file failed."""
