"""Exception hierarchy shared by all rcbayes modules."""


class RCBayesError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 3


class ConfigError(RCBayesError):
    exit_code = 1


class DataError(RCBayesError):
    exit_code = 2


class NumericalError(RCBayesError):
    exit_code = 3


# thermal_models
class NonPositiveParameter(RCBayesError, ValueError):
    exit_code = 1


class UnstableDiscretization(NumericalError):
    pass


class DimensionMismatch(RCBayesError, ValueError):
    exit_code = 2


class MissingParameter(RCBayesError, KeyError):
    exit_code = 1

    def __str__(self):
        return Exception.__str__(self)


# autodiff
class DomainError(NumericalError, ValueError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class NonFiniteResult(NumericalError):
    pass


# density
class OutOfSupport(NumericalError):
    pass


class MissingPrior(ConfigError):
    pass


class IncompatibleData(DataError):
    pass


# filtering
class SingularInnovation(NumericalError):
    pass


class NonConvergence(NumericalError, RuntimeWarning):
    """Issued as a warning by optimisers that stop before converging."""


class ZeroRange(DataError):
    pass


# samplers
class InitFailure(NumericalError):
    pass


class AllDivergent(NumericalError, RuntimeWarning):
    """Issued as a warning: every kept transition diverged."""


class Diverged(NumericalError, RuntimeWarning):
    """Issued as a warning: the ELBO ran off to minus infinity."""


# diagnostics
class ZeroWithinVariance(NumericalError):
    pass


class ZeroObservation(DataError):
    pass


# forecast
class MissingExogenous(DataError):
    pass


class EmptyHistory(DataError):
    pass


# io
class ParseError(DataError):
    pass


class NonUniformSampling(DataError):
    pass


class MissingColumn(DataError):
    def __init__(self, column):
        super().__init__(f"missing column {column!r}")
        self.column = column
