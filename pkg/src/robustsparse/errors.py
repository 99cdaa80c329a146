"""Exception types shared across the estimators."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative numerical routine exhausts its iteration cap."""


class NoThresholdError(RuntimeError):
    """Raised when a filter branch was entered but no cut threshold exists.

    On data satisfying the good-set conditions a valid threshold is guaranteed,
    so this usually signals either mistuned constants or a sample set far below
    the size the guarantees require.  Carries a ``diagnostics`` dict with the
    state of the offending iteration.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
