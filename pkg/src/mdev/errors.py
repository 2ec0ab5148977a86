"""Exception hierarchy shared by every module."""


class MdevError(ValueError):
    """Base class for domain errors; the CLI maps these to exit code 1."""


class DomainError(MdevError):
    pass


class DimensionError(MdevError):
    pass


class NotPositiveDefiniteError(MdevError):
    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(
            f"matrix is not positive definite: Cholesky pivot {pivot} is {value!r}"
        )


class NoSolutionError(MdevError):
    pass


class ConvergenceError(MdevError):
    def __init__(self, message: str, trace=None):
        self.trace = list(trace or [])
        super().__init__(message)
