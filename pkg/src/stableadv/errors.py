"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """Malformed input data (CSV schema, config files, shape mismatches in files)."""


class DivergenceError(ArithmeticError):
    """Numerical failure: divergent gradient ascent/descent or non-finite objective."""


class SamplingBudgetError(RuntimeError):
    """Rejection sampling failed to reach the target count within its draw budget."""
