"""Synthetic two-country monthly panel with a known data-generating process.

Each macro variable is a persistent AR(1) around a country-specific level. The
exchange rate depends on its own previous value and on last month's country
deltas, so the forecasting models have something real to find."""

import logging
from pathlib import Path

import numpy as np

from fxlab.data import DATE_PATTERN, TimeSeriesFrame, month_ordinal
from fxlab.errors import InvalidParameter
from fxlab.utils.files import write_frame_csv

logger = logging.getLogger(__name__)

TARGET = "forex"
VARIABLES = (
    "cpi",
    "iip",
    "interest",
    "money_supply",
    "reserves",
    "stock_index",
    "trade",
)

# (USA level, IND level) per variable
LEVELS = {
    "cpi": (220.0, 110.0),
    "iip": (100.0, 120.0),
    "interest": (2.5, 7.5),
    "money_supply": (12.0, 9.0),
    "reserves": (120.0, 300.0),
    "stock_index": (2000.0, 1500.0),
    "trade": (-40.0, -10.0),
}
# Effect of one standard deviation of each delta on next month's rate
DELTA_WEIGHTS = (0.08, -0.06, 0.1, -0.05, 0.06, -0.08, 0.05)

MACRO_PERSISTENCE = 0.9
MACRO_NOISE = 0.02
FOREX_MEAN = 60.0
FOREX_NOISE = 0.3


def month_range(start: str, months: int) -> tuple[str, ...]:
    if not DATE_PATTERN.match(start):
        raise InvalidParameter(f"`{start}` is not a `YYYY-MM` month stamp.")
    first = month_ordinal(start)
    return tuple(
        f"{ordinal // 12:04d}-{ordinal % 12 + 1:02d}"
        for ordinal in range(first, first + months)
    )


def _ar1(rng: np.random.Generator, level: float, months: int) -> np.ndarray:
    scale = MACRO_NOISE * max(abs(level), 1.0)
    series = np.empty(months)
    series[0] = level + rng.normal(0, scale)
    for t in range(1, months):
        series[t] = (
            level
            + MACRO_PERSISTENCE * (series[t - 1] - level)
            + rng.normal(0, scale)
        )
    return series


def generate_panel(
    months: int = 297,
    start: str = "1994-04",
    seed: int = 0,
    persistence: float = 0.97,
) -> tuple[TimeSeriesFrame, TimeSeriesFrame]:
    """USA and IND frames with `forex` first and the seven macro variables after it.

    forex_t = c + persistence * forex_{t-1} + sum_j w_j * z_{j,t-1} + noise, where
    z_j is the standardized country delta of variable j. `persistence = 1` makes the
    rate a random walk with delta-driven steps."""

    if months < 3:
        raise InvalidParameter("A panel needs at least 3 months.")
    if not 0 <= persistence <= 1:
        raise InvalidParameter("`persistence` must be in [0, 1].")

    rng = np.random.default_rng(seed)
    dates = month_range(start, months)
    usa = np.column_stack([_ar1(rng, LEVELS[name][0], months) for name in VARIABLES])
    ind = np.column_stack([_ar1(rng, LEVELS[name][1], months) for name in VARIABLES])

    delta = usa - ind
    means = np.array([LEVELS[name][0] - LEVELS[name][1] for name in VARIABLES])
    # Stationary standard deviation of the difference of two independent AR(1)s
    stds = np.array(
        [
            MACRO_NOISE
            * np.hypot(max(abs(LEVELS[name][0]), 1.0), max(abs(LEVELS[name][1]), 1.0))
            for name in VARIABLES
        ]
    ) / np.sqrt(1 - MACRO_PERSISTENCE**2)
    drivers = (delta - means) / stds @ np.asarray(DELTA_WEIGHTS)

    intercept = FOREX_MEAN * (1 - persistence)
    forex = np.empty(months)
    forex[0] = FOREX_MEAN
    for t in range(1, months):
        forex[t] = (
            intercept
            + persistence * forex[t - 1]
            + drivers[t - 1]
            + rng.normal(0, FOREX_NOISE)
        )

    names = (TARGET, *VARIABLES)
    logger.debug(
        f"Generated {months} months from {start} (seed {seed}, persistence {persistence})."
    )
    return (
        TimeSeriesFrame(dates, names, np.column_stack([forex, usa])),
        TimeSeriesFrame(dates, names, np.column_stack([forex, ind])),
    )


def write_panel(
    usa: TimeSeriesFrame, ind: TimeSeriesFrame, directory: Path
) -> tuple[Path, Path]:
    """Writes `usa.csv` and `ind.csv` into `directory`."""

    directory = Path(directory)
    paths = directory / "usa.csv", directory / "ind.csv"
    for frame, path in zip((usa, ind), paths):
        write_frame_csv(path, frame.to_pandas().reset_index())
    return paths
