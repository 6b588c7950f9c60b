"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes disagree with the model dimensions."""


class ConfigError(ValueError):
    """An experiment or strategy configuration is invalid."""


class SolverError(RuntimeError):
    """A numerical routine hit a state it cannot recover from."""


class ConvergenceError(SolverError):
    """An iterative solver ran out of iterations without meeting its tolerance."""
