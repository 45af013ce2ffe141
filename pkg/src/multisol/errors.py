"""Exception hierarchy shared by the solver modules."""


class MultisolError(Exception):
    """Base class for all library errors."""


class NoWells(MultisolError):
    """The nonlinear term is nonnegative on the whole scanned range."""


class ResolutionTooCoarse(MultisolError):
    pass


class LastWellUnbounded(MultisolError):
    pass


class NegativeSlopeAtEndpoint(MultisolError):
    pass


class NoBound(MultisolError):
    pass


class BadDimension(MultisolError):
    pass


class PlateauTooLarge(MultisolError):
    pass


class ZeroProfile(MultisolError):
    pass


class DegenerateConstraintGradient(MultisolError):
    pass


class SingularSystem(MultisolError):
    pass


class ZeroCharge(MultisolError):
    pass


class BadMultiplier(MultisolError):
    pass


class NoSignChange(MultisolError):
    pass


class NotConverged(MultisolError):
    pass


class ConfigError(MultisolError):
    """Problem-file error carrying a line/column position when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)
