"""Exception hierarchy shared by all sbmd modules."""


class SBMDError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SBMDError, ValueError):
    """A point lies outside the set where a function is defined."""


class ParameterError(SBMDError, ValueError):
    """An algorithm or plan parameter violates its precondition."""


class DimensionError(SBMDError, ValueError):
    pass


class UnsupportedCombinationError(SBMDError, ValueError):
    """A regularizer/geometry pairing without a closed-form prox."""


class PlanError(SBMDError, ValueError):
    pass


class StateError(SBMDError, RuntimeError):
    pass


class ConfigError(SBMDError, ValueError):
    pass


class TrialFailure(SBMDError, RuntimeError):
    """A single experiment trial raised; carries the failing seed."""

    def __init__(self, seed: int, N: int, cause: BaseException):
        super().__init__(f"trial with seed {seed} (N={N}) failed: {cause!r}")
        self.seed = seed
        self.N = N
