"""Handles the monthly two-country panel: loading, validation, country deltas,
min-max scaling, differencing and chronological splits."""

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd

from fxlab.errors import (
    ColumnMismatch,
    DataError,
    DateMismatch,
    DegenerateColumn,
    EmptyPartition,
    InvalidParameter,
    MalformedDate,
    MissingFile,
    MonthGap,
    NameMismatch,
    NonNumericCell,
    SeriesTooShort,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

DATE_COLUMN = "date"
DATE_PATTERN = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")

# Source label used in errors raised for frames built in memory
IN_MEMORY = "<frame>"


def month_ordinal(date: str) -> int:
    """Months elapsed since year 0 for a `YYYY-MM` stamp."""
    return int(date[:4]) * 12 + int(date[5:7]) - 1


def _check_months(dates: tuple[str, ...], source: Path | str) -> None:
    """Raises if `dates` are malformed or not consecutive calendar months."""

    for row, date in enumerate(dates):
        if not isinstance(date, str) or not DATE_PATTERN.match(date):
            raise MalformedDate(source, row + 1, str(date))
    ordinals = [month_ordinal(date) for date in dates]
    for index in range(1, len(ordinals)):
        if ordinals[index] - ordinals[index - 1] != 1:
            raise MonthGap(source, dates[index], dates[index - 1])


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Date-indexed matrix of named monthly series.

    `values` has one row per date and one column per name. It is copied on
    construction and made read-only, so frames can be shared freely."""

    dates: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        dates = tuple(self.dates)
        names = tuple(self.names)
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1 and len(names) == 1:
            values = values.reshape(-1, 1)

        if len(dates) < 1:
            raise InvalidParameter("A frame needs at least one date.")
        if values.shape != (len(dates), len(names)):
            raise ShapeMismatch(
                f"Values have shape {values.shape}, expected "
                f"({len(dates)}, {len(names)})."
            )
        if len(set(names)) != len(names):
            raise ColumnMismatch(f"Column names are not unique: {names}")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter("Frame values must all be finite.")
        _check_months(dates, IN_MEMORY)

        values.setflags(write=False)
        # Frozen dataclass, so the normalized fields go through `object.__setattr__`
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return len(self.dates)

    @property
    def n_cols(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise NameMismatch(f"Column `{name}` is not in {list(self.names)}.")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def select(self, names) -> "TimeSeriesFrame":
        """Returns a frame with only `names`, in that order."""
        indices = [self.index_of(name) for name in names]
        return TimeSeriesFrame(self.dates, tuple(names), self.values[:, indices])

    def rows(self, start: int, stop: int) -> "TimeSeriesFrame":
        """Returns the rows `start:stop` as a new frame."""
        if not 0 <= start < stop <= self.n_rows:
            raise InvalidParameter(
                f"Row range {start}:{stop} is empty or outside 0:{self.n_rows}."
            )
        return TimeSeriesFrame(
            self.dates[start:stop], self.names, self.values[start:stop]
        )

    def with_column(
        self, name: str, values, position: int | None = None
    ) -> "TimeSeriesFrame":
        """Returns a frame where `name` holds `values`. An existing column of the same
        name is replaced; the column is placed at `position` (default: last)."""

        column = np.asarray(values, dtype=np.float64)
        if column.shape != (self.n_rows,):
            raise ShapeMismatch(
                f"Column `{name}` has {column.size} values for {self.n_rows} dates."
            )
        keep = [i for i, existing in enumerate(self.names) if existing != name]
        names = [self.names[i] for i in keep]
        matrix = [self.values[:, i] for i in keep]
        position = len(names) if position is None else position
        names.insert(position, name)
        matrix.insert(position, column)
        return TimeSeriesFrame(self.dates, tuple(names), np.column_stack(matrix))

    def to_pandas(self) -> pd.DataFrame:
        return pd.DataFrame(
            self.values,
            index=pd.Index(self.dates, name=DATE_COLUMN),
            columns=list(self.names),
        )

    @classmethod
    def from_pandas(cls, table: pd.DataFrame) -> "TimeSeriesFrame":
        """Builds a frame from a `DataFrame` indexed by `YYYY-MM` stamps."""
        return cls(
            tuple(str(date) for date in table.index),
            tuple(str(name) for name in table.columns),
            table.to_numpy(dtype=np.float64),
        )


@dataclass(frozen=True)
class ScalingParams:
    """Per-column minimum and maximum fitted on the training rows."""

    names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray
    fitted_rows: int

    def bounds(self, name: str) -> tuple[float, float]:
        if name not in self.names:
            raise NameMismatch(f"Column `{name}` was not scaled.")
        index = self.names.index(name)
        return float(self.mins[index]), float(self.maxs[index])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "min": self.mins.tolist(),
            "max": self.maxs.tolist(),
            "fitted_rows": self.fitted_rows,
        }


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    boundary_index: int

    @classmethod
    def from_fraction(cls, n_rows: int, train_fraction: float) -> "SplitSpec":
        if not 0 < train_fraction <= 1:
            raise InvalidParameter("`train_fraction` must be in (0, 1].")
        return cls(train_fraction, math.floor(train_fraction * n_rows))


class Design(NamedTuple):
    """Supervised layout: `X[i]` holds the frame row before `dates[i]`, `y[i]` the
    target at `dates[i]`."""

    X: np.ndarray
    y: np.ndarray
    dates: tuple[str, ...]
    feature_names: tuple[str, ...]


def _parse_number(text) -> float:
    """Correctly rounded `float64` of a decimal cell, NaN when it is not a number."""

    # `float` also takes Python literal forms such as `1_000`
    if not isinstance(text, str) or "_" in text:
        return math.nan
    try:
        return float(text)
    except ValueError:
        return math.nan


def load_csv(path: Path | str, expected_columns=None) -> TimeSeriesFrame:
    """Loads a `date,<col>,...` CSV of monthly values into a validated frame.

    Errors name the physical line of the file (the header is line 1)."""

    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)

    try:
        # Read everything as text so each cell can be validated and reported
        table = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DataError(f"`{path}` is empty.")
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"`{path}` could not be parsed: {e}")

    columns = [str(column) for column in table.columns]
    if not columns or columns[0] != DATE_COLUMN:
        raise ColumnMismatch(f"`{path}`: the first column must be `{DATE_COLUMN}`.")
    names = columns[1:]
    if not names:
        raise ColumnMismatch(f"`{path}` has no value columns.")
    if expected_columns is not None and sorted(names) != sorted(expected_columns):
        raise ColumnMismatch(
            f"`{path}` has columns {names}, expected {list(expected_columns)}."
        )
    if table.empty:
        raise DataError(f"`{path}` has no data rows.")

    dates = tuple(str(value) for value in table[DATE_COLUMN])
    for offset, date in enumerate(dates):
        if not DATE_PATTERN.match(date):
            raise MalformedDate(path, offset + 2, date)

    values = np.empty((len(table), len(names)))
    for j, name in enumerate(names):
        numeric = np.array([_parse_number(cell) for cell in table[name]], dtype=float)
        bad = ~np.isfinite(numeric)
        if bad.any():
            offset = int(np.argmax(bad))
            raise NonNumericCell(path, offset + 2, name, str(table[name].iloc[offset]))
        values[:, j] = numeric

    _check_months(dates, path)
    logger.debug(f"Loaded `{path}`: {len(dates)} months x {len(names)} columns.")
    return TimeSeriesFrame(dates, tuple(names), values)


def country_delta(usa: TimeSeriesFrame, ind: TimeSeriesFrame) -> TimeSeriesFrame:
    """Element-wise USA minus IND for every column."""

    if usa.dates != ind.dates:
        raise DateMismatch(
            f"USA covers {usa.dates[0]}..{usa.dates[-1]} ({usa.n_rows} months), "
            f"IND covers {ind.dates[0]}..{ind.dates[-1]} ({ind.n_rows} months)."
        )
    if usa.names != ind.names:
        raise NameMismatch(f"USA columns {usa.names} differ from IND {ind.names}.")
    return TimeSeriesFrame(usa.dates, usa.names, usa.values - ind.values)


def build_panel(
    usa: TimeSeriesFrame, ind: TimeSeriesFrame, target: str
) -> TimeSeriesFrame:
    """Country deltas for every column but `target`, which is a bilateral rate taken
    from the USA file as a level and placed first."""

    if target not in usa.names:
        raise ColumnMismatch(f"Target column `{target}` is not in {list(usa.names)}.")
    delta = country_delta(usa, ind.select(usa.names))
    return delta.with_column(target, usa.column(target), position=0)


def minmax_fit(frame: TimeSeriesFrame, train_rows: SplitSpec) -> ScalingParams:
    """Per-column min and max over the training rows only."""

    train = frame.values[: train_rows.boundary_index]
    if train.shape[0] < 2:
        raise SeriesTooShort("Min-max scaling needs at least 2 training rows.")
    mins = train.min(axis=0)
    maxs = train.max(axis=0)
    for name, low, high in zip(frame.names, mins, maxs):
        if low == high:
            raise DegenerateColumn(name)
    return ScalingParams(frame.names, mins, maxs, int(train.shape[0]))


def _check_scaled_names(frame: TimeSeriesFrame, params: ScalingParams) -> None:
    if frame.names != params.names:
        raise NameMismatch(
            f"Frame columns {frame.names} differ from scaled columns {params.names}."
        )


def minmax_transform(frame: TimeSeriesFrame, params: ScalingParams) -> TimeSeriesFrame:
    _check_scaled_names(frame, params)
    scaled = (frame.values - params.mins) / (params.maxs - params.mins)
    return TimeSeriesFrame(frame.dates, frame.names, scaled)


def minmax_inverse(frame: TimeSeriesFrame, params: ScalingParams) -> TimeSeriesFrame:
    _check_scaled_names(frame, params)
    levels = frame.values * (params.maxs - params.mins) + params.mins
    return TimeSeriesFrame(frame.dates, frame.names, levels)


def inverse_column(values, params: ScalingParams, name: str) -> np.ndarray:
    """Maps scaled values of a single column back to its original units."""
    low, high = params.bounds(name)
    return np.asarray(values, dtype=np.float64) * (high - low) + low


def difference(series, order: int = 1) -> np.ndarray:
    """The `order`-th difference of `series`; the output is `order` values shorter."""

    series = np.asarray(series, dtype=np.float64)
    if order < 1:
        raise InvalidParameter("Differencing order must be at least 1.")
    if series.size <= order:
        raise SeriesTooShort(
            f"A series of {series.size} values cannot be differenced {order} times."
        )
    return np.diff(series, n=order)


def invert_difference(diffs, initial) -> np.ndarray:
    """Rebuilds a series from its `len(initial)`-th differences and its first
    `len(initial)` values."""

    diffs = np.asarray(diffs, dtype=np.float64)
    initial = np.asarray(initial, dtype=np.float64)
    if initial.size < 1:
        raise InvalidParameter("At least one initial value is needed.")

    current = diffs
    # Integrate one order at a time, anchoring on the last known value of each order
    for k in reversed(range(initial.size)):
        head = np.diff(initial, n=k)
        current = head[-1] + np.cumsum(current)
    return np.concatenate([initial, current])


def difference_anchor(levels, order: int, index: int) -> float:
    """The part of `levels[index]` known before `index`, such that
    `levels[index] = anchor + (order-th difference at index)`."""

    levels = np.asarray(levels, dtype=np.float64)
    if order < 0:
        raise InvalidParameter("Differencing order cannot be negative.")
    if index < order or index >= levels.size:
        raise SeriesTooShort(f"Index {index} has no {order} earlier values.")
    if order == 0:
        return 0.0
    return float(
        sum(
            -((-1) ** k) * math.comb(order, k) * levels[index - k]
            for k in range(1, order + 1)
        )
    )


def difference_frame(frame: TimeSeriesFrame, orders: dict) -> TimeSeriesFrame:
    """Differences each column by its own order and keeps the dates every column
    still covers."""

    missing = [name for name in frame.names if name not in orders]
    if missing:
        raise NameMismatch(f"No differencing order for {missing}.")
    depth = max(orders[name] for name in frame.names)
    if depth >= frame.n_rows:
        raise SeriesTooShort(
            f"{frame.n_rows} rows cannot be differenced {depth} times."
        )

    columns = []
    for name in frame.names:
        order = orders[name]
        series = frame.column(name)
        if order == 0:
            columns.append(series[depth:])
        else:
            columns.append(difference(series, order)[depth - order :])
    return TimeSeriesFrame(frame.dates[depth:], frame.names, np.column_stack(columns))


def chronological_split(
    frame: TimeSeriesFrame, train_fraction: float
) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """Splits without shuffling: the first `floor(fraction * n)` rows train."""

    if not 0 < train_fraction < 1:
        raise InvalidParameter("`train_fraction` must be strictly between 0 and 1.")
    split = SplitSpec.from_fraction(frame.n_rows, train_fraction)
    boundary = split.boundary_index
    if boundary < 2 or boundary >= frame.n_rows:
        raise EmptyPartition(
            f"A {train_fraction} split of {frame.n_rows} rows leaves {boundary} "
            f"training and {frame.n_rows - boundary} test rows."
        )
    return frame.rows(0, boundary), frame.rows(boundary, frame.n_rows)


def lagged_design(frame: TimeSeriesFrame, target: str) -> Design:
    """Pairs the row at t-1 (target first, then the other columns) with the target
    at t."""

    if frame.n_rows < 2:
        raise SeriesTooShort("A lagged design needs at least 2 rows.")
    order = [target] + [name for name in frame.names if name != target]
    values = frame.select(order).values
    return Design(
        X=np.array(values[:-1]),
        y=np.array(values[1:, 0]),
        dates=frame.dates[1:],
        feature_names=tuple(f"{name}_lag1" for name in order),
    )
