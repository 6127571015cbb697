"""Exception hierarchy shared by all engines."""


class FomError(Exception):
    """Base class for every error raised by fomatch."""


class InstanceError(FomError):
    """An instance description violates the fully online model."""


class DuplicateEdge(InstanceError):
    pass


class SelfLoop(InstanceError):
    pass


class MissingEvent(InstanceError):
    """A vertex lacks an arrival or deadline, or has more than one of either."""


class TimelineError(InstanceError):
    """Events are present but out of order (e.g. a deadline before its arrival)."""


class FullyOnlineViolation(InstanceError):
    """Some endpoint of an edge arrives after the other endpoint's deadline."""


class BipartitionViolation(InstanceError):
    pass


class NotBipartite(InstanceError):
    pass


class ParseError(FomError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NotAtDeadline(FomError):
    pass


class CapacityOutOfRange(FomError):
    pass


class MismatchedOutcome(FomError):
    """An outcome object does not belong to the instance it is checked against."""


class ZeroOpt(FomError):
    pass


class DomainError(FomError, ValueError):
    pass


class QuadratureFailure(FomError):
    pass


class NonContraction(FomError):
    pass


class SizeOverflow(FomError):
    pass


class TooLargeForExhaustive(FomError):
    pass


class ConstancyViolation(FomError):
    pass
