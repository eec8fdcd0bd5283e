"""
Exception hierarchy for the toolkit.

Every class carries the exit status the command layer returns for it, so a failed
run always ends with one parseable line: ``error=<ClassName> message=<text>``.
"""


class TandemError(Exception):
    exit_code = 1

    def __init__(self, message='', **context):
        super().__init__(message)
        self.context = context

    def summary(self):
        message = ' '.join(str(self).split())
        return f"error={self.__class__.__name__} message={message}"


class ConfigurationError(TandemError):
    exit_code = 2


class GeometryError(TandemError):
    exit_code = 2


class ShapeError(TandemError):
    exit_code = 3


class DomainError(TandemError):
    exit_code = 3


class MetricError(DomainError):
    pass


class SolverError(TandemError):
    exit_code = 4

    def __init__(self, message='', residual=None, freq_index=None, tx_index=None, **context):
        super().__init__(message, **context)
        self.residual = residual
        self.freq_index = freq_index
        self.tx_index = tx_index

    def tagged(self, freq_index, tx_index=None):
        where = f"frequency #{freq_index}" if tx_index is None else f"frequency #{freq_index}, transmitter #{tx_index}"
        return SolverError(
            f"{self} ({where})",
            residual=self.residual,
            freq_index=freq_index,
            tx_index=tx_index,
        )


class OracleError(TandemError):
    exit_code = 4


class GenerationError(TandemError):
    exit_code = 5


class NumericalError(TandemError):
    exit_code = 6


class OptimizerError(NumericalError):
    pass


class TrainingAborted(NumericalError):

    def __init__(self, message='', snapshot=None, **context):
        super().__init__(message, **context)
        self.snapshot = snapshot


class IntegrationError(TandemError):
    exit_code = 7


class CorruptionError(TandemError):
    exit_code = 8


class FormatError(TandemError):
    exit_code = 8


class ValidationFailed(TandemError):
    exit_code = 9
