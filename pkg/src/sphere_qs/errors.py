"""Exception types raised by the laboratory."""


class SphereQSError(Exception):
    """Base class for all errors raised by :mod:`sphere_qs`."""


class MeshError(SphereQSError):
    """Invalid or degenerate mesh data."""


class TopologyError(SphereQSError):
    """The mesh is not a closed genus-0 surface."""


class EvaluationError(SphereQSError):
    """A field evaluator produced a non-finite value."""

    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class IntegratorError(SphereQSError):
    """Flow integration failed or exceeded its drift budget."""


class ConstructionError(SphereQSError):
    """A partition of unity could not be built with the requested parameters."""


class ExpressionError(SphereQSError):
    """Malformed field expression, with a 1-based source position."""

    def __init__(self, message, source="", offset=0):
        self.source = source
        self.offset = offset
        head = source[:offset]
        self.line = head.count("\n") + 1
        self.column = offset - (head.rfind("\n") + 1) + 1
        super().__init__(f"{message} at line {self.line}, column {self.column}")
        self.reason = message


class ConfigError(SphereQSError):
    """Invalid experiment configuration."""
