"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved over the paired multipliers (alpha, alpha*) by sequential
two-coefficient optimization, picking the maximal violating pair at each step."""

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics.pairwise import rbf_kernel as rbf_gram
from sklearn.model_selection import TimeSeriesSplit

from fxlab.errors import (
    AllCellsFailed,
    DimensionMismatch,
    FxlabError,
    InvalidParameter,
    NoConvergence,
)

logger = logging.getLogger(__name__)

# Curvature floor for pairs along which the dual is linear
TAU = 1e-12


@dataclass(frozen=True)
class SvrConfig:
    C: float = 1000.0
    gamma: float = 0.001
    epsilon: float = 0.1
    tolerance: float = 1e-3
    max_iter: int = 200_000
    # Check that every step increases the dual objective
    debug: bool = False

    def __post_init__(self):
        if not self.C > 0:
            raise InvalidParameter("`C` must be positive.")
        if not self.gamma > 0:
            raise InvalidParameter("`gamma` must be positive.")
        if not self.epsilon >= 0:
            raise InvalidParameter("`epsilon` cannot be negative.")
        if not self.tolerance > 0:
            raise InvalidParameter("`tolerance` must be positive.")
        if self.max_iter < 1:
            raise InvalidParameter("`max_iter` must be at least 1.")
        if not self.tolerance < self.epsilon + self.C:
            raise InvalidParameter("`tolerance` must be below `epsilon + C`.")

    def to_dict(self) -> dict:
        config = asdict(self)
        config.pop("debug")
        return config


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    config: SvrConfig
    # Row of each support vector in the training data
    support_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    # Set when every target lies inside the tube and no solve was needed
    degenerate: bool = False
    iterations: int = 0
    max_violation: float = 0.0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "n_features": self.n_features,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "support_indices": self.support_indices.tolist(),
            "bias": self.bias,
            "degenerate": self.degenerate,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SvrModel":
        coefs = np.asarray(data["dual_coefs"], dtype=np.float64)
        vectors = np.asarray(data["support_vectors"], dtype=np.float64)
        return cls(
            support_vectors=vectors.reshape(coefs.size, int(data["n_features"])),
            dual_coefs=coefs,
            bias=float(data["bias"]),
            config=SvrConfig(**data["config"]),
            support_indices=np.asarray(data.get("support_indices", []), dtype=int),
            degenerate=bool(data.get("degenerate", False)),
            iterations=int(data.get("iterations", 0)),
        )


@dataclass
class _DualState:
    """Working set of the solver: z = [alpha; alpha*] with signs s = [+1; -1]."""

    kernel: np.ndarray
    signs: np.ndarray
    z: np.ndarray
    gradient: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        self.n = self.kernel.shape[0]

    def q_column(self, index: int) -> np.ndarray:
        """Column `index` of Q = (s s^T) * [[K, K], [K, K]]."""
        base = self.kernel[:, index % self.n]
        return self.signs[index] * self.signs * np.concatenate([base, base])


def rbf_kernel(x1, x2, gamma: float) -> float:
    """exp(-gamma * ||x1 - x2||^2)"""

    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape:
        raise DimensionMismatch(f"Vectors of shape {x1.shape} and {x2.shape}.")
    if gamma < 0:
        raise InvalidParameter("`gamma` cannot be negative.")
    return math.exp(-gamma * float(np.sum((x1 - x2) ** 2)))


def _dual_value(state: _DualState, y: np.ndarray, epsilon: float) -> float:
    """-1/2 b'Kb - eps * sum|b| + y'b with b = alpha - alpha*."""

    n = state.n
    beta = state.z[:n] - state.z[n:]
    # The alpha block of the gradient is K b + eps - y
    k_beta = state.gradient[:n] - epsilon + y
    return float(-0.5 * beta @ k_beta - epsilon * np.sum(state.z) + y @ beta)


def _select_pair(state: _DualState, C: float) -> tuple[int, int, float]:
    """Maximal violating pair (i, j) and the violation m(z) - M(z)."""

    s, z, g = state.signs, state.z, state.gradient
    score = -s * g
    up = ((s > 0) & (z < C)) | ((s < 0) & (z > 0))
    low = ((s > 0) & (z > 0)) | ((s < 0) & (z < C))
    if not up.any() or not low.any():
        return -1, -1, 0.0
    i = int(np.argmax(np.where(up, score, -np.inf)))
    j = int(np.argmin(np.where(low, score, np.inf)))
    return i, j, float(score[i] - score[j])


def _update_pair(state: _DualState, i: int, j: int, C: float) -> None:
    """Exact minimization of the dual over coordinates i and j, clipped to the box."""

    s, z, g = state.signs, state.z, state.gradient
    q_i = state.q_column(i)
    q_j = state.q_column(j)
    old_i, old_j = z[i], z[j]

    if s[i] != s[j]:
        curvature = max(q_i[i] + q_j[j] + 2 * q_i[j], TAU)
        delta = (-g[i] - g[j]) / curvature
        diff = z[i] - z[j]
        z[i] += delta
        z[j] += delta
        if diff > 0:
            if z[j] < 0:
                z[j] = 0.0
                z[i] = diff
        elif z[i] < 0:
            z[i] = 0.0
            z[j] = -diff
        if diff > 0:
            if z[i] > C:
                z[i] = C
                z[j] = C - diff
        elif z[j] > C:
            z[j] = C
            z[i] = C + diff
    else:
        curvature = max(q_i[i] + q_j[j] - 2 * q_i[j], TAU)
        delta = (g[i] - g[j]) / curvature
        total = z[i] + z[j]
        z[i] -= delta
        z[j] += delta
        if total > C:
            if z[i] > C:
                z[i] = C
                z[j] = total - C
        elif z[j] < 0:
            z[j] = 0.0
            z[i] = total
        if total > C:
            if z[j] > C:
                z[j] = C
                z[i] = total - C
        elif z[i] < 0:
            z[i] = 0.0
            z[j] = total

    g += q_i * (z[i] - old_i) + q_j * (z[j] - old_j)


def _bias(state: _DualState, C: float) -> float:
    """Average of -s*G over free multipliers, else the middle of the feasible range."""

    s, z, g = state.signs, state.z, state.gradient
    score = -s * g
    free = (z > 0) & (z < C)
    if free.any():
        return float(np.mean(score[free]))

    up = ((s > 0) & (z < C)) | ((s < 0) & (z > 0))
    low = ((s > 0) & (z > 0)) | ((s < 0) & (z < C))
    upper = np.min(score[low], initial=np.inf)
    lower = np.max(score[up], initial=-np.inf)
    return float((upper + lower) / 2)


def fit_svr(X, y, config: SvrConfig) -> SvrModel:
    """Solves the epsilon-SVR dual and keeps the samples with a nonzero coefficient."""

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DimensionMismatch(f"X has shape {X.shape} for {y.size} targets.")
    if y.size < 2:
        raise InvalidParameter("SVR needs at least 2 samples.")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidParameter("SVR inputs must be finite.")

    C, epsilon = config.C, config.epsilon
    centre = float(np.mean(y))
    if np.max(np.abs(y - centre)) <= epsilon:
        logger.warning(
            "Every target lies inside the epsilon tube; the model is constant."
        )
        return SvrModel(
            support_vectors=np.empty((0, X.shape[1])),
            dual_coefs=np.empty(0),
            bias=centre,
            config=config,
            degenerate=True,
        )

    # Solved on centred targets so that a shift of y only moves the bias
    y = y - centre
    n = y.size
    state = _DualState(
        kernel=rbf_gram(X, X, gamma=config.gamma),
        signs=np.concatenate([np.ones(n), -np.ones(n)]),
        z=np.zeros(2 * n),
        gradient=np.concatenate([epsilon - y, epsilon + y]),
    )

    previous = _dual_value(state, y, epsilon) if config.debug else 0.0
    violation = np.inf
    for iteration in range(1, config.max_iter + 1):
        i, j, violation = _select_pair(state, C)
        if violation < config.tolerance:
            break
        _update_pair(state, i, j, C)
        if config.debug:
            current = _dual_value(state, y, epsilon)
            assert current >= previous - 1e-9 * max(1.0, abs(previous)), (
                f"Dual objective decreased at iteration {iteration}: "
                f"{previous} -> {current}"
            )
            previous = current
    else:
        raise NoConvergence(config.max_iter, violation)

    beta = state.z[:n] - state.z[n:]
    support = beta != 0
    logger.debug(
        f"SVR converged in {iteration} iterations: {int(support.sum())} support "
        f"vectors, violation {violation:.2e}"
    )
    return SvrModel(
        support_vectors=X[support].copy(),
        dual_coefs=beta[support].copy(),
        bias=_bias(state, C) + centre,
        config=config,
        support_indices=np.flatnonzero(support),
        iterations=iteration,
        max_violation=violation,
    )


def predict_many(model: SvrModel, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"Inputs have {X.shape[1]} features, the model {model.n_features}."
        )
    if model.dual_coefs.size == 0:
        return np.full(X.shape[0], model.bias)
    gram = rbf_gram(X, model.support_vectors, gamma=model.config.gamma)
    return gram @ model.dual_coefs + model.bias


def predict_svr(model: SvrModel, x) -> float:
    """f(x) = sum_i beta_i k(sv_i, x) + b"""

    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != model.n_features:
        raise DimensionMismatch(
            f"Input has shape {x.shape}, the model {model.n_features} features."
        )
    return float(predict_many(model, x.reshape(1, -1))[0])


def _training_coefs(model: SvrModel, n: int) -> np.ndarray:
    """beta over all `n` training samples, zero off the support."""

    beta = np.zeros(n)
    if model.support_indices.size != model.dual_coefs.size:
        raise DimensionMismatch("The model does not record its support rows.")
    if model.support_indices.size and model.support_indices.max() >= n:
        raise DimensionMismatch(f"Support rows exceed the {n} samples given.")
    beta[model.support_indices] = model.dual_coefs
    return beta


def dual_objective(model: SvrModel, X, y) -> float:
    """Dual objective of `model`'s coefficients on its training data (X, y)."""

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size or X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"X has shape {X.shape} for {y.size} targets and {model.n_features} features."
        )
    beta = _training_coefs(model, y.size)
    gram = rbf_gram(X, X, gamma=model.config.gamma)
    return float(
        -0.5 * beta @ gram @ beta
        - model.config.epsilon * np.sum(np.abs(beta))
        + y @ beta
    )


def kkt_violation(model: SvrModel, X, y) -> float:
    """Largest violation of the epsilon-SVR optimality conditions over the training
    data (X, y).

    Inside the tube the coefficient is zero; a free coefficient sits on the tube's
    edge; a coefficient at +-C lies on or outside it."""

    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    C, epsilon = model.config.C, model.config.epsilon
    residual = y - predict_many(model, X)
    beta = _training_coefs(model, y.size)

    violations = np.empty(y.size)
    for index, (b, r) in enumerate(zip(beta, residual)):
        if b == 0:
            violations[index] = max(abs(r) - epsilon, 0.0)
        elif abs(b) < C:
            violations[index] = abs(r - math.copysign(epsilon, b))
        elif b > 0:
            violations[index] = max(epsilon - r, 0.0)
        else:
            violations[index] = max(r + epsilon, 0.0)
    return float(violations.max(initial=0.0))


def _score_cell(X, y, config: SvrConfig, folds: int) -> dict:
    """Mean validation RMSE of `config` over expanding-window folds."""

    row = {"C": config.C, "gamma": config.gamma, "epsilon": config.epsilon}
    rmses = []
    try:
        for train, valid in TimeSeriesSplit(n_splits=folds).split(X):
            model = fit_svr(X[train], y[train], config)
            errors = predict_many(model, X[valid]) - y[valid]
            rmses.append(float(np.sqrt(np.mean(errors**2))))
    except FxlabError as e:
        row.update(mean_rmse=math.nan, folds=folds, error=str(e))
        return row
    row.update(mean_rmse=float(np.mean(rmses)), folds=folds, error="")
    return row


def expand_grid(base: SvrConfig, cs, gammas, epsilons) -> list[SvrConfig]:
    """Cartesian product of the candidate values; an empty list keeps `base`'s value."""

    return [
        SvrConfig(
            C=c,
            gamma=gamma,
            epsilon=epsilon,
            tolerance=base.tolerance,
            max_iter=base.max_iter,
        )
        for c, gamma, epsilon in itertools.product(
            cs or [base.C], gammas or [base.gamma], epsilons or [base.epsilon]
        )
    ]


def grid_search(
    X, y, grid: list[SvrConfig], folds: int, jobs: int = 1
) -> tuple[SvrConfig, pd.DataFrame]:
    """Picks the configuration with the lowest mean validation RMSE; ties go to the
    smaller C, then the smaller gamma. Failed cells are recorded and skipped."""

    if not grid:
        raise InvalidParameter("The SVR grid is empty.")
    if folds < 2:
        raise InvalidParameter("Grid search needs at least 2 folds.")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[0] <= folds:
        raise InvalidParameter(f"{X.shape[0]} samples cannot make {folds} folds.")

    rows = Parallel(n_jobs=jobs)(
        delayed(_score_cell)(X, y, config, folds) for config in grid
    )
    table = pd.DataFrame(rows, columns=["C", "gamma", "epsilon", "mean_rmse", "folds", "error"])
    for row in rows:
        if row["error"]:
            logger.warning(
                f"Grid cell C={row['C']}, gamma={row['gamma']}, "
                f"epsilon={row['epsilon']} failed: {row['error']}"
            )

    scored = [
        (row["mean_rmse"], config.C, config.gamma, index)
        for index, (row, config) in enumerate(zip(rows, grid))
        if not math.isnan(row["mean_rmse"])
    ]
    if not scored:
        raise AllCellsFailed(f"All {len(grid)} grid cells failed to fit.")
    best = grid[min(scored)[3]]
    logger.info(f"Grid search picked C={best.C}, gamma={best.gamma}, epsilon={best.epsilon}")
    return best, table
