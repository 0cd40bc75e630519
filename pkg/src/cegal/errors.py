"""Exception hierarchy shared by every module."""


class CegalError(Exception):
    """Base class for all library errors."""


class ModelError(CegalError):
    """A model violates a structural invariant (row sums, index bounds, ...)."""


class IncompletePolicy(CegalError):
    pass


class NoDemonstrations(CegalError):
    pass


class DimensionMismatch(CegalError, ValueError):
    pass


class PctlSyntaxError(CegalError, ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownLabel(CegalError, KeyError):
    pass


class UnsupportedFormula(CegalError):
    pass


class FormulaSatisfied(CegalError):
    """Raised when a counterexample is requested for a satisfied formula."""

    def __init__(self, probability: float, threshold: float):
        super().__init__(
            f"probability {probability:.6g} does not exceed threshold {threshold:.6g}"
        )
        self.probability = probability
        self.threshold = threshold


class BudgetExhausted(CegalError):
    """Path enumeration hit ``max_paths`` before the mass exceeded the threshold.

    The partial path set is attached as ``partial``.
    """

    def __init__(self, partial):
        super().__init__(
            f"path budget exhausted after {len(partial.paths)} paths "
            f"(mass {partial.total_probability:.6g})"
        )
        self.partial = partial


class EmptyCounterexample(CegalError):
    pass


class InfeasibleStationary(CegalError):
    def __init__(self, stationary_probability: float, optimal_probability: float, threshold: float):
        super().__init__(
            f"stationary projection reaches {stationary_probability:.6g} > {threshold:.6g} "
            f"while the step-indexed optimum reaches {optimal_probability:.6g}"
        )
        self.stationary_probability = stationary_probability
        self.optimal_probability = optimal_probability
        self.threshold = threshold


class UnsafeInitialPolicy(CegalError):
    pass


class FilterExhausted(CegalError):
    pass


class SpecError(CegalError, ValueError):
    """Invalid environment specification."""


class FormatError(CegalError, ValueError):
    """A text file does not follow its declared format."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(where + message)
        self.path = path
        self.line = line
