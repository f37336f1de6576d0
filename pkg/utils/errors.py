"""
Exception hierarchy for the fall-risk engine.

DataError and its subclasses are problems with inputs (frames, datasets,
model files) and map to exit code 2. InvariantViolation means the engine
itself broke a guarantee and maps to exit code 3.
"""

from typing import Optional


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class FallRiskError(Exception):
    """Base class for all engine errors."""


class DataError(FallRiskError):
    """Invalid or unusable input data."""


class GeometryError(DataError):
    pass


class DegenerateContour(GeometryError):
    pass


class NonFinite(GeometryError):
    pass


class OutOfBounds(GeometryError):
    pass


class MissingLandmark(DataError):
    """A keypoint needed by the side rule or a distance feature is unusable."""


class EmptyClass(DataError):
    pass


class SingleClass(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class InvalidParams(DataError):
    pass


class ModelFormatError(DataError):
    pass


class VersionMismatch(ModelFormatError):
    pass


class CorruptModel(ModelFormatError):
    pass


class RecordError(DataError):
    """
    A rejected stream record.

    Attributes:
        line_number: 1-based line number in the input stream, if known
    """

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        self.message = message
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(f"{prefix}{message}")


class ParseError(RecordError):
    pass


class ValidationError(RecordError):
    pass


class FoldTrainingError(DataError):
    """Training failed inside one cross-validation split."""

    def __init__(self, repeat: int, fold: int, cause: Exception):
        self.repeat = repeat
        self.fold = fold
        self.cause = cause
        super().__init__(f"repeat {repeat}, fold {fold}: {type(cause).__name__}: {cause}")


class InvariantViolation(FallRiskError):
    """An internal guarantee did not hold."""


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the CLI exit-code contract.

    Args:
        exc: Exception raised by a pipeline step

    Returns:
        2 for data/validation problems (including missing input files),
        3 for invariant violations and anything unexpected
    """
    if isinstance(exc, (DataError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_INTERNAL
