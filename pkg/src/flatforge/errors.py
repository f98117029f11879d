"""Exception hierarchy.

Every error raised by the library derives from :class:`FlatforgeError`; the
CLI prints ``ERROR <ClassName>: <detail>`` using the class name.
"""


class FlatforgeError(Exception):
    """Base class for all library errors."""


# -- expression kernel -------------------------------------------------------

class ParseError(FlatforgeError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class UnknownFunction(ParseError):
    pass


class MalformedVariable(ParseError):
    pass


class UnboundVariable(FlatforgeError):
    pass


class DomainError(FlatforgeError):
    pass


class InconclusiveDomain(FlatforgeError):
    pass


class SingularityEncountered(FlatforgeError):
    pass


# -- analysis ----------------------------------------------------------------

class ValidationError(FlatforgeError):
    pass


class NoRelativeDegree(FlatforgeError):
    pass


class InconsistentR(FlatforgeError):
    pass


class RoundTripFailure(FlatforgeError):
    def __init__(self, message, worst_point=None):
        self.worst_point = worst_point
        super().__init__(message)


class SingularFeedback(FlatforgeError):
    pass


class NewtonDivergence(FlatforgeError):
    pass


class StructureViolation(FlatforgeError):
    pass


class RankDeficient(FlatforgeError):
    pass


class SymbolicUnavailable(FlatforgeError):
    pass


# -- control / simulation ----------------------------------------------------

class CountMismatch(FlatforgeError):
    pass


class MissingParameterization(FlatforgeError):
    pass


class UnsupportedAtom(FlatforgeError):
    pass


class CheckFailed(FlatforgeError):
    pass


class SystemFileError(FlatforgeError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
