"""Exception hierarchy shared by all ptcontrol modules."""


class PTControlError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PTControlError, ValueError):
    """An argument lies outside the domain of a function (e.g. non-finite input)."""


class SingularityError(DomainError):
    """A time-varying gain was evaluated at or past its blow-up time."""


class ParameterError(PTControlError, ValueError):
    """A design parameter violates its admissible range."""


class NumericError(PTControlError, ArithmeticError):
    """An intermediate quantity became non-finite.

    ``component`` holds the 1-based index of the offending recursion level,
    when known.
    """

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class StructuralError(PTControlError, ValueError):
    """A system lacks a structural property (e.g. observability)."""


class ConfigurationError(PTControlError, ValueError):
    """A scenario or parameter set is inconsistent.

    ``path`` is the dotted field path of the offending entry, if any.
    """

    def __init__(self, message, path=None):
        super().__init__(message if path is None else f"{path}: {message}")
        self.path = path


class DivergedError(PTControlError, RuntimeError):
    """A simulation produced a non-finite or exploding state.

    ``last_time`` is the last grid time with a finite state and ``result``
    carries the partial trajectory up to that point.
    """

    def __init__(self, message, last_time, result=None):
        super().__init__(message)
        self.last_time = last_time
        self.result = result
