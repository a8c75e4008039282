"""Forecast accuracy metrics on level forecasts."""

from dataclasses import asdict, dataclass

import numpy as np

from fxlab.errors import InvalidParameter, LengthMismatch, ZeroActual


@dataclass(frozen=True)
class MetricsReport:
    mape: float
    mpe: float
    rmse: float
    accuracy_pct: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    actual = np.asarray(actual, dtype=np.float64).reshape(-1)
    if pred.size != actual.size:
        raise LengthMismatch(f"{pred.size} predictions for {actual.size} actual values.")
    if pred.size < 1:
        raise InvalidParameter("Metrics need at least one value.")
    return pred, actual


def _relative_errors(pred, actual) -> np.ndarray:
    pred, actual = _pair(pred, actual)
    zeros = np.flatnonzero(actual == 0)
    if zeros.size:
        raise ZeroActual(int(zeros[0]))
    return (pred - actual) / actual


def mape(pred, actual) -> float:
    """Mean absolute percentage error, as a fraction."""
    return float(np.mean(np.abs(_relative_errors(pred, actual))))


def mpe(pred, actual) -> float:
    """Mean signed percentage error; positive means over-prediction."""
    return float(np.mean(_relative_errors(pred, actual)))


def rmse(pred, actual) -> float:
    pred, actual = _pair(pred, actual)
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def accuracy_from_mape(value: float) -> float:
    return 100 - 100 * value


def evaluate(pred, actual) -> MetricsReport:
    relative = _relative_errors(pred, actual)
    pred, actual = _pair(pred, actual)
    absolute = float(np.mean(np.abs(relative)))
    return MetricsReport(
        mape=absolute,
        mpe=float(np.mean(relative)),
        rmse=float(np.sqrt(np.mean((pred - actual) ** 2))),
        accuracy_pct=accuracy_from_mape(absolute),
        n=int(actual.size),
    )


def compare(reports: dict[str, MetricsReport]) -> list[str]:
    """Model names from best to worst: lowest RMSE, then lowest MAPE, then name."""

    return sorted(reports, key=lambda name: (reports[name].rmse, reports[name].mape, name))
