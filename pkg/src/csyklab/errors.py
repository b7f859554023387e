"""Exception types shared across modules."""


class ConfigError(ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class NumericError(RuntimeError):
    """A numerical routine failed or produced an unusable result (CLI exit code 3)."""


class FitError(NumericError):
    """A least-squares fit failed or its result is unphysical."""
