"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument is outside the range an operation accepts."""


class NumericalFailure(ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""


class DegenerateTopology(RuntimeError):
    """Random reservoir generation kept producing unusable matrices."""


class UndefinedRatio(ZeroDivisionError):
    """A robustness ratio was requested with a zero denominator."""


class TrialFailure(RuntimeError):
    """A single trial failed; carries the seeds needed to reproduce it."""

    def __init__(self, message, seeds=None, params=None):
        super().__init__(message)
        self.seeds = dict(seeds or {})
        self.params = dict(params or {})

    def __str__(self):
        base = super().__str__()
        if self.seeds:
            base += f" (seeds={self.seeds})"
        return base
