"""Econometric hypothesis tests used to justify the model inputs: the augmented
Dickey-Fuller unit-root test, pairwise Granger causality and Durbin-Watson."""

import logging
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from scipy import stats

from fxlab.data import TimeSeriesFrame, difference
from fxlab.errors import (
    AllZero,
    InvalidParameter,
    SeriesTooShort,
    SingularRegression,
)
from fxlab.utils.ols import ols

logger = logging.getLogger(__name__)

SIGNIFICANCE = 0.05

RegressionKind = Literal["constant", "constant+trend"]
REGRESSION_KINDS = ("constant", "constant+trend")

# Response-surface coefficients of the 5% Dickey-Fuller tau critical value,
# cv(T) = b0 + b1 / T + b2 / T**2 + b3 / T**3 (MacKinnon, 2010)
TAU_5PCT = {
    "constant": (-2.86154, -2.8903, -4.234, -40.040),
    "constant+trend": (-3.41049, -4.3904, -9.036, -45.374),
}

DW_BAND = (1.7, 2.3)


@dataclass(frozen=True)
class AdfResult:
    statistic: float
    gamma_hat: float
    se_gamma: float
    lag_order_used: int
    regression_kind: RegressionKind
    critical_5pct: float
    reject_unit_root: bool
    nobs: int
    series: str = "series"

    def to_record(self) -> dict:
        return {
            "test": "adf",
            "series": self.series,
            "statistic": self.statistic,
            "critical_5pct": self.critical_5pct,
            "decision": "stationary" if self.reject_unit_root else "non-stationary",
            "lag_order": self.lag_order_used,
            "regression": self.regression_kind,
            "nobs": self.nobs,
        }


@dataclass(frozen=True)
class GrangerResult:
    cause: str
    effect: str
    lags: int
    f_statistic: float
    p_value: float
    reject_noncausality: bool

    def to_record(self) -> dict:
        return {
            "test": "granger",
            "series": f"{self.cause}->{self.effect}",
            "cause": self.cause,
            "effect": self.effect,
            "lags": self.lags,
            "statistic": self.f_statistic,
            "p_value": self.p_value,
            "decision": "causal" if self.reject_noncausality else "non-causal",
        }


@dataclass(frozen=True)
class DwResult:
    statistic: float
    interpretation: Literal["positive-autocorr", "none", "negative-autocorr"]
    series: str = "series"

    def to_record(self) -> dict:
        return {
            "test": "durbin-watson",
            "series": self.series,
            "statistic": self.statistic,
            "decision": self.interpretation,
        }


class StationarityReport(NamedTuple):
    """Differencing order per column, every ADF result on the way there and the
    columns that never passed."""

    orders: dict[str, int]
    results: dict[str, list[AdfResult]]
    failing: list[str]


def default_max_lag(n: int) -> int:
    return math.floor(12 * (n / 100) ** 0.25)


def critical_value_5pct(nobs: int, regression_kind: RegressionKind) -> float:
    b0, b1, b2, b3 = TAU_5PCT[regression_kind]
    return b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3


def _adf_design(
    y: np.ndarray, dy: np.ndarray, lags: int, start: int, trend: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Response and regressors of the ADF regression for `dy[start:]`.

    `dy[t]` is the change into `y[t + 1]`, so its lagged level is `y[t]`."""

    rows = np.arange(start, dy.size)
    columns = [np.ones(rows.size)]
    if trend:
        columns.append(rows + 1.0)
    columns.append(y[rows])
    columns.extend(dy[rows - i] for i in range(1, lags + 1))
    return dy[rows], np.column_stack(columns)


def adf_test(
    series,
    max_lag: int | None = None,
    regression_kind: RegressionKind = "constant",
    name: str = "series",
) -> AdfResult:
    """Augmented Dickey-Fuller test of the null hypothesis of a unit root.

    The lag order is the AIC minimizer over `0..max_lag` on a common sample; the
    chosen regression is then refitted on every usable observation."""

    y = np.asarray(series, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise InvalidParameter(f"`{name}` contains non-finite values.")
    if regression_kind not in REGRESSION_KINDS:
        raise InvalidParameter(
            f"`regression_kind` must be one of these: {', '.join(REGRESSION_KINDS)}"
        )
    if max_lag is None:
        max_lag = default_max_lag(y.size)
    if max_lag < 0:
        raise InvalidParameter("`max_lag` cannot be negative.")
    if y.size < max_lag + 10:
        raise SeriesTooShort(
            f"`{name}` has {y.size} values; the ADF test needs {max_lag + 10}."
        )

    trend = regression_kind == "constant+trend"
    gamma_index = 2 if trend else 1
    dy = np.diff(y)

    best_lag, best_aic = 0, np.inf
    for lags in range(max_lag + 1):
        response, design = _adf_design(y, dy, lags, max_lag, trend)
        fit = ols(response, design)
        nobs = response.size
        if fit.rss <= 0:
            raise SingularRegression(f"`{name}`: the ADF regression fits exactly.")
        aic = nobs * math.log(fit.rss / nobs) + 2 * design.shape[1]
        # Strict comparison keeps the smaller lag on ties
        if aic < best_aic:
            best_lag, best_aic = lags, aic

    response, design = _adf_design(y, dy, best_lag, best_lag, trend)
    fit = ols(response, design)
    nobs, k = design.shape
    if fit.rss <= 0:
        raise SingularRegression(f"`{name}`: the ADF regression fits exactly.")
    sigma2 = fit.rss / (nobs - k)
    se_gamma = math.sqrt(sigma2 * fit.xtx_inv[gamma_index, gamma_index])
    gamma_hat = float(fit.coef[gamma_index])
    statistic = gamma_hat / se_gamma
    critical = critical_value_5pct(nobs, regression_kind)

    logger.debug(
        f"ADF `{name}`: statistic {statistic:.3f}, lag {best_lag}, "
        f"5% critical value {critical:.3f}"
    )
    return AdfResult(
        statistic=float(statistic),
        gamma_hat=gamma_hat,
        se_gamma=se_gamma,
        lag_order_used=best_lag,
        regression_kind=regression_kind,
        critical_5pct=critical,
        reject_unit_root=bool(statistic < critical),
        nobs=nobs,
        series=name,
    )


def granger_causality(
    frame: TimeSeriesFrame, cause: str, effect: str, lags: int
) -> GrangerResult:
    """F-test of `effect` on its own lags (restricted) against its own lags plus the
    lags of `cause` (unrestricted)."""

    if lags < 1:
        raise InvalidParameter("Granger causality needs at least 1 lag.")
    if frame.n_rows < 3 * lags + 10:
        raise SeriesTooShort(
            f"{frame.n_rows} rows are too few for a {lags}-lag Granger test."
        )

    y = frame.column(effect)
    x = frame.column(cause)
    rows = np.arange(lags, frame.n_rows)
    response = y[rows]
    own_lags = [y[rows - i] for i in range(1, lags + 1)]
    cause_lags = [x[rows - i] for i in range(1, lags + 1)]
    ones = np.ones(rows.size)

    unrestricted = ols(response, np.column_stack([ones, *own_lags, *cause_lags]))
    restricted = ols(response, np.column_stack([ones, *own_lags]))
    if unrestricted.rss <= 0:
        raise SingularRegression(f"`{cause}` -> `{effect}`: perfect fit.")

    df_denominator = rows.size - 2 * lags - 1
    numerator = max(restricted.rss - unrestricted.rss, 0.0) / lags
    f_statistic = float(numerator / (unrestricted.rss / df_denominator))
    p_value = float(np.clip(stats.f.sf(f_statistic, lags, df_denominator), 0.0, 1.0))

    return GrangerResult(
        cause=cause,
        effect=effect,
        lags=lags,
        f_statistic=f_statistic,
        p_value=p_value,
        reject_noncausality=p_value < SIGNIFICANCE,
    )


def granger_matrix(
    frame: TimeSeriesFrame, lags: int
) -> dict[tuple[str, str], GrangerResult]:
    """Granger tests over every ordered pair of distinct columns, keyed by
    `(cause, effect)`."""

    return {
        (cause, effect): granger_causality(frame, cause, effect, lags)
        for cause in frame.names
        for effect in frame.names
        if cause != effect
    }


def durbin_watson(
    residuals, band: tuple[float, float] = DW_BAND, name: str = "series"
) -> DwResult:
    """Durbin-Watson statistic, interpreted against a no-autocorrelation band
    around 2."""

    e = np.asarray(residuals, dtype=np.float64)
    if e.size < 2:
        raise SeriesTooShort("Durbin-Watson needs at least 2 residuals.")
    if not np.all(np.isfinite(e)):
        raise InvalidParameter(f"`{name}` contains non-finite values.")
    denominator = float(e @ e)
    if denominator == 0:
        raise AllZero(f"`{name}` residuals are all zero.")

    # Bounded by 4 in exact arithmetic; clip the rounding excess
    statistic = float(np.clip(np.sum(np.diff(e) ** 2) / denominator, 0.0, 4.0))
    low, high = band
    if statistic < low:
        interpretation = "positive-autocorr"
    elif statistic > high:
        interpretation = "negative-autocorr"
    else:
        interpretation = "none"
    return DwResult(statistic=statistic, interpretation=interpretation, series=name)


def stationarity_orders(
    frame: TimeSeriesFrame,
    max_order: int = 1,
    max_lag: int | None = None,
    regression_kind: RegressionKind = "constant",
) -> StationarityReport:
    """Differences every column once, then again while its ADF test fails and the
    order is below `max_order`."""

    if max_order < 1:
        raise InvalidParameter("`max_order` must be at least 1.")

    orders, results, failing = {}, {}, []
    for name in frame.names:
        series = frame.column(name)
        history = []
        order = 1
        while True:
            result = adf_test(
                difference(series, order),
                max_lag=max_lag,
                regression_kind=regression_kind,
                name=f"{name} (differenced {order}x)",
            )
            history.append(result)
            if result.reject_unit_root or order >= max_order:
                break
            order += 1
        orders[name] = order
        results[name] = history
        if not history[-1].reject_unit_root:
            failing.append(name)
            logger.warning(
                f"`{name}` is still non-stationary after differencing {order}x "
                f"(ADF {history[-1].statistic:.3f} >= {history[-1].critical_5pct:.3f})."
            )
    return StationarityReport(orders=orders, results=results, failing=failing)
