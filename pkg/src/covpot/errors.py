class FitError(ValueError):
    """The data cannot support the requested fit (rank deficiency, degenerate sample)."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class CalibrationError(RuntimeError):
    """No asymmetry level in the search range brackets the requested exceedance count."""


class EmptyExceedanceError(ValueError):
    """No observation lies above the threshold."""


class DataError(ValueError):
    """Malformed input table."""
