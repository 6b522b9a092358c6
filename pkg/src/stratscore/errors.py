"""Exception and warning types raised by the solvers."""


class StratScoreError(Exception):
    """Base class for all library errors."""


class ModelError(StratScoreError):
    """The covariance model is malformed or violates a nondegeneracy condition."""


class DimensionMismatch(ModelError):
    pass


class NotSymmetric(ModelError):
    pass


class NotPositiveSemidefinite(ModelError):
    pass


class Degenerate(ModelError):
    """var(eta | gamma) is rank deficient."""


class NoInformation(ModelError):
    """Neither eta nor gamma covaries with theta."""


class NegativeAbilityMean(ModelError):
    pass


class SingularMatrix(StratScoreError):
    pass


class AssumptionViolated(StratScoreError):
    """A solver was called on a model outside the covariance assumptions it needs."""


class SolverError(StratScoreError):
    """Base class for numerical failures (CLI exit code 4)."""


class NoConvergence(SolverError):
    pass


class BracketFailure(SolverError):
    pass


class StepTooLarge(SolverError):
    pass


class InvalidWeight(StratScoreError):
    pass


class DegenerateAbilityMean(StratScoreError):
    pass


class InvalidFamily(StratScoreError):
    pass


class InvalidDof(StratScoreError):
    pass


class UnsupportedDimension(StratScoreError):
    pass


class SupportWarning(UserWarning):
    """Moments suggest that gamma >= 0 is unlikely to hold on the support."""


class GridTooCoarse(UserWarning):
    pass


class HeuristicWarning(UserWarning):
    """A result came from a local search without a uniqueness guarantee."""
