"""Exception types raised across the package."""


class CabError(Exception):
    """Base class for all package errors."""


class DimensionError(CabError, ValueError):
    pass


class ParameterError(CabError, ValueError):
    pass


class NumericalError(CabError, ArithmeticError):
    """Raised when a matrix that should be positive definite is not."""


class ConvergenceError(CabError, RuntimeError):
    def __init__(self, message: str, grad_norm: float, n_iter: int):
        super().__init__(f"{message} (grad norm {grad_norm:.3e} after {n_iter} iterations)")
        self.grad_norm = grad_norm
        self.n_iter = n_iter


class SizeError(CabError, ValueError):
    pass


class DistributionError(CabError, ValueError):
    pass


class ConfigError(CabError, ValueError):
    pass


class RoundError(CabError, RuntimeError):
    """Wraps a failure inside an experiment run with the round it happened in."""

    def __init__(self, round_index: int, policy: str, cause: Exception):
        super().__init__(f"policy {policy!r} failed at round {round_index}: {cause}")
        self.round_index = round_index
        self.policy = policy
        self.cause = cause
