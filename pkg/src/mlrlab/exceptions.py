"""Exception hierarchy shared by all solvers and helpers."""


class MLRError(Exception):
    """Base class for every error raised by mlrlab."""


class DegenerateSystem(MLRError, ValueError):
    """A (weighted) least-squares system is rank deficient.

    Parameters
    ----------
    message : str
    round : int, optional
        Phase-I round or iteration in which the solve failed.
    component : int, optional
        1-based index of the component whose support collapsed.
    """

    def __init__(self, message, round=None, component=None):
        super().__init__(message)
        self.round = round
        self.component = component


class DegenerateComponent(MLRError):
    """An EM mixture weight collapsed below 1/n."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class ThresholdExhausted(MLRError):
    """Threshold adaptation ran out of restarts.

    ``diagnostics`` holds the restart count, the last threshold tried and
    the active-set sizes of the last attempt.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InsufficientData(MLRError, ValueError):
    pass


class Diverged(MLRError):
    pass


class ZeroVariance(MLRError, ValueError):
    pass


class Indeterminate(MLRError, ValueError):
    pass


class EmptyRange(MLRError, ValueError):
    pass


class Inapplicable(MLRError, ValueError):
    pass


class ConstantColumn(MLRError, ValueError):
    def __init__(self, column):
        super().__init__(f"column {column!r} is constant after centering")
        self.column = column


class UnknownDataset(MLRError, KeyError):
    pass


class EmptySubset(MLRError):
    """A fit subset came out empty; the threshold needs adapting."""
