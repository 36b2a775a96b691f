"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration or input parameters."""


class ModelCollapsedError(RuntimeError):
    """Every sparse component was pruned away."""


class SingularSystemError(RuntimeError):
    """A linear system was numerically singular.

    Attributes:
        condition: estimated condition number of the offending matrix.
    """

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition
