"""
Exception hierarchy for electorate_lab.

Every error carries the exit code the command line front end reports for it:
1 for configuration problems, 2 for data problems, 3 when an analysis
precondition does not hold.
"""
import typing as t


class ElectorateLabError(Exception):
    exit_code = 1


class ConfigError(ElectorateLabError):
    exit_code = 1

    def __init__(self, message: str, key: t.Optional[str] = None):
        self.reason = message
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)

    def under(self, section: str) -> "ConfigError":
        """The same error with its key nested under `section`."""
        key = f"{section}.{self.key}" if self.key else section
        return ConfigError(self.reason, key=key)


class DomainError(ConfigError, ValueError):
    """A numeric input outside the domain of an operation."""


class DimensionMismatchError(DomainError):
    pass


class DataError(ElectorateLabError):
    exit_code = 2


class CVRParseError(DataError):
    def __init__(self, message: str, line: t.Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CVRSchemaError(DataError):
    pass


class MissingResponseError(DataError):
    pass


class OutputLockedError(DataError):
    pass


class AnalysisError(ElectorateLabError):
    exit_code = 3


class EmptyCellError(AnalysisError):
    pass


class EmptyAggregationError(AnalysisError):
    pass


class DegenerateSeriesError(AnalysisError):
    pass


class RankDeficientError(AnalysisError):
    def __init__(self, columns: t.Sequence[str]):
        self.columns = tuple(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {', '.join(self.columns)}")


class EmptySideError(AnalysisError):
    def __init__(self, side: str, threshold: float):
        self.side = side
        super().__init__(f"no observations on the {side} side of threshold {threshold:g}")


class InsufficientVariationError(AnalysisError):
    pass


class NoPopulatedPairError(AnalysisError):
    pass


class ParameterRequiredError(AnalysisError):
    pass
