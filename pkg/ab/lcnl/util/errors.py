# errors.py

class LcnlError(Exception):
    """
    Root of every error raised by the estimation engine.
    """


class ModelSpecError(LcnlError, ValueError):
    pass


class DimensionError(ModelSpecError):
    def __init__(self, name, expected, got):
        self.name = name
        self.expected = expected
        self.got = got
        super().__init__(f"Dimension mismatch in '{name}': expected {expected}, got {got}")


class MissingCovariateError(LcnlError, ValueError):
    def __init__(self, variable, individual_id=None):
        self.variable = variable
        self.individual_id = individual_id
        super().__init__(f"Covariate '{variable}' is missing or not finite for individual '{individual_id}'")


class UnknownAlternativeError(ModelSpecError):
    def __init__(self, alternative, individual_id=None):
        self.alternative = alternative
        self.individual_id = individual_id
        super().__init__(f"Alternative '{alternative}' (individual '{individual_id}') is not in the choice tree")


class NumericalError(LcnlError, ArithmeticError):
    def __init__(self, message, coordinate=None):
        self.coordinate = coordinate
        super().__init__(message)


class SingularHessianError(NumericalError):
    def __init__(self, min_eigenvalue, condition_number, ridge_cap):
        self.min_eigenvalue = min_eigenvalue
        self.condition_number = condition_number
        self.ridge_cap = ridge_cap
        super().__init__(
            f"-H is not positive definite even with ridge {ridge_cap:g}: "
            f"min eigenvalue {min_eigenvalue:.6g}, condition number {condition_number:.6g}"
        )


class DataIOError(LcnlError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CodingError(DataIOError):
    def __init__(self, column, value, allowed=None):
        self.value = value
        self.allowed = allowed
        msg = f"response code {value!r} in column '{column}' is outside the documented range"
        if allowed is not None:
            msg += f" {allowed}"
        super().__init__(msg, column=column)


class EffectsError(LcnlError, ValueError):
    pass


class ConfigError(LcnlError, ValueError):
    pass
