"""Exception hierarchy. ``exit_code`` is what the CLI returns for each family."""


class RadialGanError(Exception):
    exit_code = 1


class ConfigError(RadialGanError, ValueError):
    exit_code = 2


class DataError(RadialGanError, ValueError):
    exit_code = 3


class SchemaError(DataError):
    pass


class DimensionError(DataError):
    pass


class NumericError(RadialGanError, ArithmeticError):
    exit_code = 4


class UnsupportedActivationError(ConfigError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, iteration: int, breakdown: dict):
        self.iteration = iteration
        self.breakdown = breakdown
        super().__init__(f"non-finite loss at iteration {iteration}: {breakdown}")
