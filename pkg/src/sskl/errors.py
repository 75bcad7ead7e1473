"""Exception hierarchy shared by every module."""


class SsklError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SsklError, ValueError):
    pass


class NotSquare(DimensionMismatch):
    pass


class NotSymmetric(SsklError, ValueError):
    pass


class NonFinite(SsklError, ValueError):
    pass


class NotPositiveDefinite(SsklError, ArithmeticError):
    pass


class NegativeVariance(SsklError, ArithmeticError):
    """Predictive variance came out below the clamping slack."""


class SplitOutOfRange(SsklError, ValueError):
    pass


class EmptyLabeledSet(SsklError, ValueError):
    pass


class TrainingDiverged(SsklError, ArithmeticError):
    pass


class EmptyTrainingSet(SsklError, ValueError):
    pass


class InsufficientData(SsklError, ValueError):
    pass


class NoNumericColumns(SsklError, ValueError):
    pass


class EmptyAfterCleaning(SsklError, ValueError):
    pass


class EmptyVectors(SsklError, ValueError):
    pass


class ZeroBaseline(SsklError, ZeroDivisionError):
    pass


class ConfigError(SsklError, ValueError):
    """Malformed or inconsistent experiment configuration."""

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


class UnknownMethod(ConfigError):
    pass
