"""Exception hierarchy shared by every fxlab module.

Exceptions carry their context as attributes so the CLI can print a single diagnostic
line and tests can assert on the offending row, column or epoch."""

from pathlib import Path


class FxlabError(Exception):
    """Base class for every error raised on purpose by fxlab."""


class InvalidParameter(FxlabError, ValueError):
    """Raised when an argument violates an operation's precondition."""


class ConfigError(FxlabError, ValueError):
    """Raised when the configuration file or a command-line override is invalid."""


# Data errors


class DataError(FxlabError):
    """Raised when input data cannot be turned into a valid frame."""


class MissingFile(DataError, FileNotFoundError):
    def __init__(self, path: Path | str):
        super().__init__(f"File `{path}` does not exist.")
        self.path = Path(path)


class MalformedDate(DataError):
    def __init__(self, path: Path | str, row: int, value: str):
        super().__init__(
            f"`{path}` line {row}: date `{value}` is not a `YYYY-MM` month stamp."
        )
        self.path = Path(path)
        self.row = row
        self.value = value


class NonNumericCell(DataError):
    def __init__(self, path: Path | str, row: int, column: str, value: str):
        super().__init__(
            f"`{path}` line {row}, column `{column}`: `{value}` is not a finite number."
        )
        self.path = Path(path)
        self.row = row
        self.column = column
        self.value = value


class MonthGap(DataError):
    def __init__(self, path: Path | str, date: str, previous: str):
        super().__init__(
            f"`{path}`: month `{date}` does not directly follow `{previous}`."
        )
        self.path = Path(path)
        self.date = date
        self.previous = previous


class ColumnMismatch(DataError):
    """Raised when a file's columns differ from the expected ones."""


class DateMismatch(DataError):
    """Raised when two frames that must be aligned cover different months."""


class NameMismatch(DataError):
    """Raised when two frames or a frame and its parameters name different columns."""


class DegenerateColumn(DataError):
    def __init__(self, name: str):
        super().__init__(
            f"Column `{name}` is constant over the training rows and cannot be scaled."
        )
        self.name = name


class EmptyPartition(DataError):
    """Raised when a split would leave the train or test partition too small."""


class ZeroVariance(DataError):
    def __init__(self, name: str = "series"):
        super().__init__(f"`{name}` has zero variance.")
        self.name = name


class TooFewSamples(DataError):
    """Raised when there are not enough samples to fit a model."""


class NonStationarySeries(DataError):
    def __init__(self, names: list[str]):
        super().__init__(
            f"Series still non-stationary after differencing: {', '.join(names)}"
        )
        self.names = names


# Computation errors


class ComputationError(FxlabError):
    """Raised when a numerical routine cannot produce a result."""


class SeriesTooShort(ComputationError):
    """Raised when a series has fewer observations than the operation needs."""


class SingularRegression(ComputationError):
    """Raised when a least-squares design matrix is rank deficient."""


class NoConvergence(ComputationError):
    def __init__(self, iterations: int, violation: float):
        super().__init__(
            f"Solver did not converge in {iterations} iterations "
            f"(maximal KKT violation {violation:.3g})."
        )
        self.iterations = iterations
        self.violation = violation


class AllCellsFailed(ComputationError):
    """Raised when every candidate of a grid search failed to fit."""


class NonFiniteLoss(ComputationError):
    def __init__(self, epoch: int):
        super().__init__(f"Training loss became non-finite at epoch {epoch}.")
        self.epoch = epoch


class AllZero(ComputationError):
    """Raised when a residual vector is identically zero."""


# Shape errors


class ShapeMismatch(FxlabError, ValueError):
    """Raised when array shapes do not agree with a model."""


class DimensionMismatch(ShapeMismatch):
    """Raised when vector dimensions differ."""


class LengthMismatch(ShapeMismatch):
    """Raised when paired vectors have different lengths."""


class ZeroActual(FxlabError, ValueError):
    def __init__(self, index: int):
        super().__init__(f"Actual value at index {index} is zero.")
        self.index = index
