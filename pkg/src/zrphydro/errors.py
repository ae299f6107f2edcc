"""Exception types shared across the package.

The CLI maps ValidationError to exit code 2 and SolverError to exit code 3.
"""


class ValidationError(ValueError):
    """Invalid parameters, configuration, or preconditions."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge or the dynamics hit a guard."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history
