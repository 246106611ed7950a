"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, or inconsistent fields."""


class IngestionError(RuntimeError):
    """A dataset source could not be read or decoded."""


class CheckpointError(RuntimeError):
    """A checkpoint file is missing, truncated, corrupt, or from an unknown format version."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, iteration: int, what: str):
        super().__init__(f"training diverged at iteration {iteration}: {what}")
        self.iteration = iteration
        self.what = what
