class StableLBMError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StableLBMError, ValueError):
    pass


class InputError(StableLBMError, ValueError):
    pass


class ConstructionError(StableLBMError, ArithmeticError):
    pass


class Infeasible(StableLBMError):
    """No kernel element of the constraint matrix lies in the positive orthant.

    This is a scientific outcome (no stability structure from this
    construction), not a programming error.
    """

    def __init__(self, message: str, phase1_objective: float | None = None):
        super().__init__(message)
        self.phase1_objective = phase1_objective


class SimulationError(StableLBMError, FloatingPointError):
    pass
