"""Exception hierarchy.

Every error raised on purpose by the package derives from `RandLensError`, so
callers (the CLI in particular) can map it to an exit status.
"""


class RandLensError(Exception):
    """Base class for all package errors."""


class ConfigError(RandLensError):
    """Invalid user configuration."""


# factor space
class DuplicateFactorName(ConfigError):
    pass


class ZeroCardinality(ConfigError):
    pass


class FewerThanTwoFactors(ConfigError):
    pass


class UnknownFactor(ConfigError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class IndexOutOfBounds(ConfigError, IndexError):
    pass


# planning
class PlanningError(RandLensError):
    pass


class NotEnoughConfigurations(PlanningError):
    pass


class MitigatedSpaceTooSmall(PlanningError):
    pass


class GoldenSpaceTooSmall(PlanningError):
    pass


class SamplingExhausted(PlanningError):
    """Rejection sampling hit its retry cap before finding enough distinct draws."""


class BudgetExhaustedBeforeFirstEstimate(PlanningError):
    pass


# execution
class AdapterError(RandLensError):
    """The experiment adapter raised or returned a non-finite metric."""


class NonDeterministicAdapter(AdapterError):
    def __init__(self, message: str, cells=()):
        super().__init__(message)
        self.cells = list(cells)


class StoreError(RandLensError):
    pass


class UnknownExperiment(ConfigError):
    pass


# statistics
class StatsError(RandLensError):
    pass


class TooFewValues(StatsError, ValueError):
    pass


class RaggedGrid(StatsError, ValueError):
    pass


class ImportanceUndefined(StatsError, ZeroDivisionError):
    pass


class LengthMismatch(StatsError, ValueError):
    pass


# reporting
class IncompletePlan(RandLensError):
    pass


class MissingGolden(RandLensError):
    pass


class TooFewRows(TooFewValues):
    pass


class TooFewColumns(TooFewValues):
    pass
