"""Vector autoregression: AIC lag selection, equation-by-equation OLS, iterated
multi-step forecasts and rolling one-step level forecasts."""

import logging
from dataclasses import dataclass

import numpy as np

from fxlab.data import TimeSeriesFrame
from fxlab.errors import (
    InvalidParameter,
    SeriesTooShort,
    ShapeMismatch,
    SingularRegression,
)
from fxlab.utils.ols import ols

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VarModel:
    """Fitted VAR(p).

    `coefs[tau - 1][j, i]` is the effect of variable `i` at lag `tau` on
    variable `j`. `sigma` is the maximum-likelihood residual covariance."""

    p: int
    names: tuple[str, ...]
    alpha: np.ndarray
    coefs: np.ndarray
    residuals: np.ndarray
    sigma: np.ndarray

    @property
    def k(self) -> int:
        return len(self.names)

    def predict_next(self, history: np.ndarray) -> np.ndarray:
        """One-step prediction from the last `p` rows of `history` (oldest first)."""

        history = np.asarray(history, dtype=np.float64)
        if history.ndim != 2 or history.shape[1] != self.k or history.shape[0] < self.p:
            raise ShapeMismatch(
                f"History has shape {history.shape}; need at least {self.p} rows "
                f"of {self.k} values."
            )
        prediction = self.alpha.copy()
        for tau in range(1, self.p + 1):
            prediction += self.coefs[tau - 1] @ history[-tau]
        return prediction

    def companion(self) -> np.ndarray:
        """The (k*p x k*p) companion matrix of the lag polynomial."""

        k, p = self.k, self.p
        matrix = np.zeros((k * p, k * p))
        matrix[:k, :] = np.hstack(list(self.coefs))
        matrix[k:, :-k] = np.eye(k * (p - 1))
        return matrix

    def is_stable(self) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.companion()))) < 1)

    def implied_mean(self) -> np.ndarray:
        return np.linalg.solve(np.eye(self.k) - self.coefs.sum(axis=0), self.alpha)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "names": list(self.names),
            "alpha": self.alpha.tolist(),
            "A": self.coefs.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "VarModel":
        k = len(data["names"])
        return cls(
            p=int(data["p"]),
            names=tuple(data["names"]),
            alpha=np.asarray(data["alpha"], dtype=np.float64),
            coefs=np.asarray(data["A"], dtype=np.float64).reshape(-1, k, k),
            # Residuals are not persisted
            residuals=np.empty((0, k)),
            sigma=np.asarray(data["sigma"], dtype=np.float64),
        )


def lag_design(values: np.ndarray, p: int, start: int) -> np.ndarray:
    """Rows `[1, y_{t-1}, ..., y_{t-p}]` for `t = start..n-1`."""

    n = values.shape[0]
    blocks = [np.ones((n - start, 1))]
    blocks.extend(values[start - tau : n - tau] for tau in range(1, p + 1))
    return np.hstack(blocks)


def _unpack(coef: np.ndarray, p: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    alpha = coef[0].copy()
    coefs = np.stack([coef[1 + tau * k : 1 + (tau + 1) * k].T for tau in range(p)])
    return alpha, coefs


def lag_aic_table(frame: TimeSeriesFrame, max_lag: int) -> dict[int, float]:
    """AIC of VAR(p) for `p = 1..max_lag`, all fitted on the rows after `max_lag`."""

    if max_lag < 1:
        raise InvalidParameter("`max_lag` must be at least 1.")
    k = frame.n_cols
    if frame.n_rows < k * max_lag + max_lag + 10:
        raise SeriesTooShort(
            f"{frame.n_rows} rows are too few to compare VAR lags up to {max_lag}."
        )

    values = frame.values
    response = values[max_lag:]
    effective = response.shape[0]
    table = {}
    for p in range(1, max_lag + 1):
        fit = ols(response, lag_design(values, p, max_lag))
        sigma = fit.residuals.T @ fit.residuals / effective
        sign, logdet = np.linalg.slogdet(sigma)
        if sign <= 0:
            raise SingularRegression(f"VAR({p}) residual covariance is singular.")
        table[p] = float(logdet + 2 * (k * k * p + k) / effective)
    return table


def select_lag_aic(frame: TimeSeriesFrame, max_lag: int) -> int:
    """Lag order minimizing the AIC; ties go to the smaller order."""

    table = lag_aic_table(frame, max_lag)
    best = min(table, key=lambda p: (table[p], p))
    logger.debug(f"VAR AIC by lag: {table}; selected p = {best}")
    return best


def fit_var(frame: TimeSeriesFrame, p: int) -> VarModel:
    """Fits every equation of a VAR(p) by ordinary least squares."""

    if p < 1:
        raise InvalidParameter("VAR lag order must be at least 1.")
    k = frame.n_cols
    if frame.n_rows < k * p + p + 2:
        raise SeriesTooShort(f"{frame.n_rows} rows are too few for a VAR({p}).")

    values = frame.values
    fit = ols(values[p:], lag_design(values, p, p))
    alpha, coefs = _unpack(fit.coef, p, k)
    residuals = fit.residuals
    sigma = residuals.T @ residuals / residuals.shape[0]
    return VarModel(
        p=p,
        names=frame.names,
        alpha=alpha,
        coefs=coefs,
        residuals=residuals,
        sigma=sigma,
    )


def forecast_var(model: VarModel, history, horizon: int) -> np.ndarray:
    """Iterated forecasts, feeding each prediction back as the newest lag.

    `history` holds exactly `p` rows in the model's column order, oldest first."""

    if isinstance(history, TimeSeriesFrame):
        history = history.select(model.names).values
    history = np.asarray(history, dtype=np.float64)
    if history.shape != (model.p, model.k):
        raise ShapeMismatch(
            f"History has shape {history.shape}, expected ({model.p}, {model.k})."
        )
    if horizon < 0:
        raise InvalidParameter("`horizon` cannot be negative.")

    window = list(history)
    forecasts = np.empty((horizon, model.k))
    for step in range(horizon):
        forecasts[step] = model.predict_next(np.array(window[-model.p :]))
        window.append(forecasts[step])
    return forecasts


def rolling_one_step(
    model: VarModel,
    full_frame: TimeSeriesFrame,
    test_range,
    target: str,
    level_anchor,
) -> np.ndarray:
    """Level forecasts for each row of `test_range` from the actual lagged rows of
    `full_frame`: `level_anchor[i]` plus the predicted (differenced) target."""

    if full_frame.names != model.names:
        raise ShapeMismatch(
            f"Frame columns {full_frame.names} differ from the model's {model.names}."
        )
    rows = list(test_range)
    anchors = np.asarray(level_anchor, dtype=np.float64).reshape(-1)
    if anchors.size != len(rows):
        raise ShapeMismatch(
            f"{anchors.size} level anchors for {len(rows)} test rows."
        )

    target_index = full_frame.index_of(target)
    values = full_frame.values
    forecasts = np.empty(len(rows))
    for i, t in enumerate(rows):
        if t < model.p or t >= full_frame.n_rows:
            raise ShapeMismatch(
                f"Row {t} has no {model.p} lagged rows inside the frame."
            )
        predicted = model.predict_next(values[t - model.p : t])[target_index]
        forecasts[i] = anchors[i] + predicted
    return forecasts
