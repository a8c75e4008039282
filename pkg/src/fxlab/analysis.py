"""Feature analysis of the model inputs: Pearson correlations and the variance
reduction each feature earns in a random forest."""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from sklearn.ensemble import RandomForestRegressor

from fxlab.data import TimeSeriesFrame
from fxlab.errors import (
    DimensionMismatch,
    InvalidParameter,
    LengthMismatch,
    TooFewSamples,
    ZeroVariance,
)

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10

# scikit-learn random states are 32-bit
SEED_MODULUS = 2**32


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"names": list(self.names), "values": self.values.tolist()}

    def to_frame(self) -> pd.DataFrame:
        table = pd.DataFrame(self.values, columns=list(self.names))
        table.insert(0, "name", list(self.names))
        return table


@dataclass(frozen=True)
class ImportanceReport:
    names: tuple[str, ...]
    importances: np.ndarray
    trees: int
    seed: int
    max_depth: int | None = None

    def ranking(self) -> list[str]:
        """Feature names by importance, highest first; ties keep column order."""
        order = sorted(range(len(self.names)), key=lambda j: (-self.importances[j], j))
        return [self.names[j] for j in order]

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "importances": self.importances.tolist(),
            "trees": self.trees,
            "max_depth": self.max_depth,
            "seed": self.seed,
            "ranking": self.ranking(),
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": list(self.names), "importance": self.importances})


def pearson(x, y) -> float:
    """Covariance over the product of standard deviations."""

    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise LengthMismatch(f"Series of {x.size} and {y.size} values.")
    if x.size < 2:
        raise InvalidParameter("Correlation needs at least 2 values.")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0:
        raise ZeroVariance("x")
    if sy == 0:
        raise ZeroVariance("y")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def correlation_matrix(frame: TimeSeriesFrame) -> CorrelationMatrix:
    if frame.n_rows < 2:
        raise InvalidParameter("Correlation needs at least 2 rows.")
    centred = frame.values - frame.values.mean(axis=0)
    scale = np.sqrt(np.sum(centred**2, axis=0))
    for name, value in zip(frame.names, scale):
        if value == 0:
            raise ZeroVariance(name)

    standard = centred / scale
    values = np.clip(standard.T @ standard, -1.0, 1.0)
    values = (values + values.T) / 2
    np.fill_diagonal(values, 1.0)
    return CorrelationMatrix(frame.names, values)


def tree_importance(
    X,
    y,
    trees: int = 200,
    max_depth: int | None = 6,
    seed: int = 0,
    feature_names=None,
    jobs: int = 1,
) -> ImportanceReport:
    """Variance-reduction importance from a bootstrap forest of regression trees.

    Every split credits its feature with its weighted variance decrease; credits are
    summed over all trees and normalized once."""

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionMismatch(f"X has shape {X.shape} for {y.size} targets.")
    if y.size < MIN_SAMPLES:
        raise TooFewSamples(
            f"Feature importance needs {MIN_SAMPLES} samples, got {y.size}."
        )
    if trees < 1:
        raise InvalidParameter("`trees` must be at least 1.")
    if max_depth is not None and max_depth < 1:
        raise InvalidParameter("`max_depth` must be at least 1.")
    names = (
        tuple(feature_names)
        if feature_names is not None
        else tuple(f"x{j}" for j in range(X.shape[1]))
    )
    if len(names) != X.shape[1]:
        raise DimensionMismatch(f"{len(names)} names for {X.shape[1]} features.")

    forest = RandomForestRegressor(
        n_estimators=trees,
        max_depth=max_depth,
        max_features=math.ceil(math.sqrt(X.shape[1])),
        bootstrap=True,
        random_state=seed % SEED_MODULUS,
        n_jobs=jobs,
    )
    forest.fit(X, y)

    credits = np.zeros(X.shape[1])
    for estimator in forest.estimators_:
        credits += estimator.tree_.compute_feature_importances(normalize=False)

    total = credits.sum()
    if total > 0:
        importances = credits / total
    else:
        logger.warning("No tree found a useful split; importances are uniform.")
        importances = np.full(X.shape[1], 1 / X.shape[1])
    return ImportanceReport(
        names=names,
        importances=importances,
        trees=trees,
        seed=seed,
        max_depth=max_depth,
    )
