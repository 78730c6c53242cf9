"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes (see cli.EXIT_CODES).
"""


class InputError(ValueError):
    """Caller passed structurally invalid arguments (shape, size, range)."""


class SchemaError(InputError):
    """A dataset file or record does not match the documented format."""


class ConfigError(InputError):
    """A run configuration is malformed or contains unknown keys."""


class PrerequisiteError(RuntimeError):
    """A pipeline command was invoked before the artifact it depends on exists."""


class NumericError(ArithmeticError):
    """A computation produced non-finite or mathematically inadmissible values."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUROC)."""


class RareConditionError(RuntimeError):
    """Rejection sampling exhausted its budget without matching the target.

    Carries an acceptance-rate estimate so callers can distinguish "rare but
    reachable" from "impossible" targets.
    """

    def __init__(self, message: str, tries: int, acceptance_rate: float):
        super().__init__(message)
        self.tries = tries
        self.acceptance_rate = acceptance_rate
