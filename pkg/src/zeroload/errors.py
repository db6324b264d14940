"""Exception types shared across the package."""


class ZeroLoadError(Exception):
    """Base class for all package errors."""


class ValidationError(ZeroLoadError, ValueError):
    """Input violates a documented precondition."""


# series handling
class MalformedRow(ValidationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NonUniformStep(ValidationError):
    pass


class MissingValue(ValidationError):
    pass


class UnboundedGap(ValidationError):
    pass


class EmptySegment(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


# tokenizer
class EmptyInput(ValidationError):
    pass


class DegenerateRange(ValidationError):
    pass


class SpecialTokenInSpan(ValidationError):
    pass


# augmentation
class PoolTooSmall(ValidationError):
    pass


class SubsequenceTooShort(ValidationError):
    pass


# model
class ShapeMismatch(ValidationError):
    pass


class TokenOutOfRange(ValidationError):
    pass


class LengthExceeded(ValidationError):
    pass


class DivergedLoss(ZeroLoadError, RuntimeError):
    pass


class CheckpointFormatError(ValidationError):
    pass


# baselines / metrics
class InsufficientResiduals(ValidationError):
    pass


class ZeroActualInMAPE(ValidationError):
    pass


class MismatchedWindows(ValidationError):
    pass
