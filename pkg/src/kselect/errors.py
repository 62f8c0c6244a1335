"""Shared exception types.

The CLI maps these onto exit codes: validation failures exit with 2,
solver non-convergence with 3.
"""


class ValidationError(ValueError):
    """Invalid model, instance, or configuration input."""


class DegenerateModelError(ValidationError):
    """Setup admits no finite competitive guarantee (e.g. c_1 >= L)."""


class SolverError(RuntimeError):
    """Root finding failed to bracket or converge."""
