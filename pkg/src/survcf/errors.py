"""Exception types shared across the package."""


class SurvCFError(Exception):
    """Base class for package errors."""


class DimensionMismatchError(SurvCFError, ValueError):
    pass


class InadmissibleMarginError(SurvCFError, ValueError):
    """The requested mean shift ``r`` lies outside ``(0, r_max]``."""

    def __init__(self, r: float, r_max: float, message: str | None = None):
        self.r = r
        self.r_max = r_max
        super().__init__(message or f"r = {r!r} is outside the admissible range (0, {r_max!r}]")


class InfeasibleQueryError(SurvCFError):
    """No point of the search region satisfies the counterfactual condition."""


class NumericalError(SurvCFError, ArithmeticError):
    """Non-finite values or a failed root bracket."""


class NoFeasibleSampleError(InfeasibleQueryError):
    def __init__(self, n_samples: int):
        self.n_samples = n_samples
        self.n_feasible = 0
        super().__init__(f"none of the {n_samples} samples satisfies the counterfactual condition")
