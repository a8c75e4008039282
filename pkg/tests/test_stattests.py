import logging

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from fxlab.data import TimeSeriesFrame
from fxlab.errors import (
    AllZero,
    InvalidParameter,
    SeriesTooShort,
    SingularRegression,
)
from fxlab.stattests import (
    adf_test,
    critical_value_5pct,
    default_max_lag,
    durbin_watson,
    granger_causality,
    granger_matrix,
    stationarity_orders,
)
from fxlab.synthetic import month_range


def frame_of(**columns) -> TimeSeriesFrame:
    names = tuple(columns)
    values = np.column_stack([columns[name] for name in names])
    return TimeSeriesFrame(month_range("1990-01", values.shape[0]), names, values)


@pytest.mark.parametrize(
    "n, expected",
    [(100, 12), (297, 15), (50, 10)],
)
def test_default_max_lag(n, expected):
    assert default_max_lag(n) == expected


def test_critical_value_matches_published_threshold():
    assert critical_value_5pct(297, "constant") == pytest.approx(-2.873, abs=0.005)
    assert critical_value_5pct(10**6, "constant") == pytest.approx(-2.86154, abs=1e-4)
    assert critical_value_5pct(297, "constant+trend") < critical_value_5pct(297, "constant")


def test_adf_statistic_matches_direct_regression():
    y = np.random.default_rng(3).normal(size=120).cumsum()

    result = adf_test(y, max_lag=0)

    dy = np.diff(y)
    X = np.column_stack([np.ones(dy.size), y[:-1]])
    coef, rss, _, _ = np.linalg.lstsq(X, dy, rcond=None)
    sigma2 = rss[0] / (dy.size - 2)
    se = np.sqrt(sigma2 * np.linalg.inv(X.T @ X)[1, 1])
    assert result.lag_order_used == 0
    assert result.nobs == dy.size
    assert result.gamma_hat == pytest.approx(coef[1], rel=1e-9)
    assert result.statistic == pytest.approx(coef[1] / se, rel=1e-9)


def test_adf_lag_selection_stays_in_range():
    y = np.random.default_rng(5).normal(size=200)

    result = adf_test(y, max_lag=4, name="noise")

    assert 0 <= result.lag_order_used <= 4
    assert result.nobs == 199 - result.lag_order_used
    assert result.to_record()["series"] == "noise"


def test_adf_trend_stationary_series():
    rng = np.random.default_rng(11)
    y = 0.5 * np.arange(300) + rng.normal(size=300)

    assert adf_test(y, regression_kind="constant+trend").reject_unit_root


@pytest.mark.parametrize("kind", ["constant", "constant+trend"])
@pytest.mark.parametrize("scale, shift", [(3.0, 10.0), (-0.5, -2.0), (1e3, 0.0)])
def test_adf_statistic_is_affine_invariant(kind, scale, shift):
    y = np.random.default_rng(8).normal(size=250).cumsum()

    base = adf_test(y, regression_kind=kind)
    moved = adf_test(scale * y + shift, regression_kind=kind)

    assert moved.lag_order_used == base.lag_order_used
    assert moved.statistic == pytest.approx(base.statistic, abs=1e-8)


@pytest.mark.parametrize(
    "series, kwargs, expected",
    [
        (np.arange(5.0), {}, SeriesTooShort),
        (np.r_[np.arange(30.0), np.nan], {}, InvalidParameter),
        (np.random.default_rng(0).normal(size=50), {"regression_kind": "trend"}, InvalidParameter),
        (np.random.default_rng(0).normal(size=50), {"max_lag": -2}, InvalidParameter),
    ],
)
def test_adf_errors(series, kwargs, expected):
    with pytest.raises(expected):
        adf_test(series, **kwargs)


@pytest.mark.slow
def test_adf_size_and_power():
    threshold_draws = 1000
    walk_rejections = noise_rejections = 0
    for seed in range(threshold_draws):
        rng = np.random.default_rng(seed)
        walk_rejections += adf_test(rng.normal(size=300).cumsum()).reject_unit_root
        noise_rejections += adf_test(rng.normal(size=300)).reject_unit_root

    assert walk_rejections / threshold_draws <= 0.08
    assert noise_rejections / threshold_draws >= 0.99


def rss(y, X):
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    return float(np.sum((y - X @ coef) ** 2))


def test_granger_matches_restricted_unrestricted_rss():
    rng = np.random.default_rng(8)
    x = rng.normal(size=150)
    y = np.r_[0.0, 0.6 * x[:-1]] + rng.normal(size=150)
    lags = 2

    result = granger_causality(frame_of(x=x, y=y), "x", "y", lags)

    rows = np.arange(lags, 150)
    own = [y[rows - i] for i in range(1, lags + 1)]
    other = [x[rows - i] for i in range(1, lags + 1)]
    ones = np.ones(rows.size)
    rss_u = rss(y[rows], np.column_stack([ones, *own, *other]))
    rss_r = rss(y[rows], np.column_stack([ones, *own]))
    df2 = rows.size - 2 * lags - 1
    expected = ((rss_r - rss_u) / lags) / (rss_u / df2)
    assert result.f_statistic == pytest.approx(expected, rel=1e-9)
    assert result.reject_noncausality
    assert result.to_record()["series"] == "x->y"


def test_granger_matrix_direction():
    reverse_rejections = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=300)
        b = np.r_[0.0, 0.8 * a[:-1]] + 0.3 * rng.normal(size=300)

        results = granger_matrix(frame_of(a=a, b=b), lags=2)

        assert results[("a", "b")].p_value < 1e-6
        reverse_rejections += results[("b", "a")].reject_noncausality

    assert reverse_rejections <= 4


def test_granger_same_series_is_singular():
    x = np.random.default_rng(1).normal(size=60)

    with pytest.raises(SingularRegression):
        granger_causality(frame_of(x=x, z=x[::-1].copy()), "x", "x", 2)


def test_granger_errors():
    frame = frame_of(a=np.arange(12.0), b=np.arange(12.0) ** 2)

    with pytest.raises(InvalidParameter):
        granger_causality(frame, "a", "b", 0)
    with pytest.raises(SeriesTooShort):
        granger_causality(frame, "a", "b", 3)


def test_granger_matrix_covers_ordered_pairs():
    rng = np.random.default_rng(2)
    frame = frame_of(a=rng.normal(size=80), b=rng.normal(size=80), c=rng.normal(size=80))

    results = granger_matrix(frame, lags=2)

    assert len(results) == 6
    assert ("a", "a") not in results
    assert all(0 <= result.p_value <= 1 for result in results.values())


@pytest.mark.slow
def test_granger_detects_lagged_copy():
    draws = 500
    detected = 0
    for seed in range(draws):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=200)
        y = np.r_[0.0, x[:-1]] + 0.5 * rng.normal(size=200)
        detected += granger_causality(frame_of(x=x, y=y), "x", "y", 2).p_value < 0.05

    assert detected / draws >= 0.95


@pytest.mark.slow
def test_granger_false_rejection_rate():
    draws = 1000
    rejected = 0
    for seed in range(draws):
        rng = np.random.default_rng(10_000 + seed)
        frame = frame_of(x=rng.normal(size=200), y=rng.normal(size=200))
        rejected += granger_causality(frame, "x", "y", 2).reject_noncausality

    assert abs(rejected / draws - 0.05) <= 0.03


@pytest.mark.parametrize(
    "residuals, statistic, interpretation",
    [
        ([1.0, -1.0, 1.0, -1.0], 3.0, "negative-autocorr"),
        ([1.0, 1.0, 1.0, 1.0], 0.0, "positive-autocorr"),
        ([1.0, 0.0, -1.0, 0.0], 1.5, "positive-autocorr"),
        ([1.0, -1.0, -1.0, 1.0], 2.0, "none"),
    ],
)
def test_durbin_watson(residuals, statistic, interpretation):
    result = durbin_watson(residuals)

    assert result.statistic == pytest.approx(statistic)
    assert result.interpretation == interpretation


@pytest.mark.parametrize(
    "residuals, expected",
    [([0.0, 0.0, 0.0], AllZero), ([1.0], SeriesTooShort), ([1.0, np.inf], InvalidParameter)],
)
def test_durbin_watson_errors(residuals, expected):
    with pytest.raises(expected):
        durbin_watson(residuals)


def test_durbin_watson_alternating_series():
    alternating = np.where(np.arange(100) % 2 == 0, 1.0, -1.0)

    result = durbin_watson(alternating)

    assert result.statistic == pytest.approx(4 * 99 / 100)
    assert result.statistic == pytest.approx(3.96)


@given(
    st.lists(
        st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False),
        min_size=2,
        max_size=200,
    )
)
def test_durbin_watson_is_bounded(values):
    residuals = np.array(values)
    assume(float(residuals @ residuals) > 0)

    assert 0.0 <= durbin_watson(residuals).statistic <= 4.0


def test_durbin_watson_white_noise_in_band():
    inside = sum(
        durbin_watson(np.random.default_rng(seed).normal(size=500)).interpretation == "none"
        for seed in range(20)
    )

    assert inside >= 18


def test_durbin_watson_random_walk_is_positively_autocorrelated():
    walk = np.random.default_rng(4).normal(size=300).cumsum()

    assert durbin_watson(walk - walk.mean()).interpretation == "positive-autocorr"


def test_stationarity_orders(caplog):
    rng = np.random.default_rng(21)
    walk = rng.normal(size=300).cumsum()
    boom = np.empty(300)
    boom[0] = 1.0
    for t in range(1, 300):
        boom[t] = 1.02 * boom[t - 1] + rng.normal()

    with caplog.at_level(logging.WARNING, logger="fxlab"):
        report = stationarity_orders(frame_of(walk=walk, boom=boom), max_order=2)

    assert report.orders == {"walk": 1, "boom": 2}
    assert report.failing == ["boom"]
    assert len(report.results["walk"]) == 1
    assert len(report.results["boom"]) == 2
    assert "boom" in caplog.text
