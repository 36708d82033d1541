"""Exception hierarchy.

Everything raised deliberately by the package derives from ``CovnoiseError``.
Input problems are ``InvalidInput`` (also a ``ValueError``); failures that
happen while a computation is running (divergence, IO) are ``RuntimeFailure``.
The CLI maps the first family to exit code 1 and the second to exit code 2.
"""


class CovnoiseError(Exception):
    pass


class InvalidInput(CovnoiseError, ValueError):
    pass


class RuntimeFailure(CovnoiseError, RuntimeError):
    pass


# linear algebra / problem construction
class NotSymmetric(InvalidInput):
    pass


class NotPositiveDefinite(InvalidInput):
    pass


class NegativeEigenvalue(InvalidInput):
    pass


class DimMismatch(InvalidInput):
    pass


class InvalidGamma(InvalidInput):
    pass


class InvalidBatchSizes(InvalidInput):
    pass


class NegativeEntry(InvalidInput):
    pass


class SingularCovariance(InvalidInput):
    pass


# networks / Fisher
class ShapeMismatch(InvalidInput):
    pass


class BadLabel(InvalidInput):
    pass


class EmptyBatch(InvalidInput):
    pass


class MissingActivations(InvalidInput):
    pass


class FisherTooLarge(InvalidInput):
    pass


class BadBatchSize(InvalidInput):
    pass


# data / config
class BadParams(InvalidInput):
    pass


class BadMagic(InvalidInput):
    pass


class TruncatedFile(InvalidInput):
    pass


class CountMismatch(InvalidInput):
    pass


class ConfigParseError(InvalidInput):
    def __init__(self, message, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class ConfigValidationError(InvalidInput):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptySeries(InvalidInput):
    pass


# runtime
class NonFiniteLoss(RuntimeFailure):
    """Raised when a run diverges; ``log`` holds the rows up to and including the bad step."""

    def __init__(self, step, loss, log=None):
        super().__init__(f"loss became {loss!r} at step {step}")
        self.step = step
        self.loss = loss
        self.log = log


class IoFailure(RuntimeFailure):
    pass
