import json
import logging
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from fxlab.errors import (
    AllCellsFailed,
    DimensionMismatch,
    InvalidParameter,
    NoConvergence,
)
from fxlab.svr import (
    SvrConfig,
    SvrModel,
    dual_objective,
    expand_grid,
    fit_svr,
    grid_search,
    kkt_violation,
    predict_many,
    predict_svr,
    rbf_kernel,
)


def sample(seed, n=40, d=2, noise=0.05):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, d))
    y = np.sin(2 * X[:, 0]) + 0.5 * X[:, -1] + noise * rng.normal(size=n)
    return X, y


@pytest.mark.parametrize(
    "x1, x2, gamma, expected",
    [
        ([0.0, 0.0], [0.0, 0.0], 0.5, 1.0),
        ([1.0, 0.0], [0.0, 0.0], 0.25, math.exp(-0.25)),
        ([1.0, 2.0], [3.0, 4.0], 0.1, math.exp(-0.8)),
        ([5.0], [-5.0], 0.0, 1.0),
    ],
)
def test_rbf_kernel(x1, x2, gamma, expected):
    assert rbf_kernel(x1, x2, gamma) == pytest.approx(expected, rel=1e-15)


def test_rbf_kernel_errors():
    with pytest.raises(DimensionMismatch):
        rbf_kernel([1.0, 2.0], [1.0], 0.5)
    with pytest.raises(InvalidParameter):
        rbf_kernel([1.0], [1.0], -0.5)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"C": 0.0},
        {"gamma": -1.0},
        {"epsilon": -0.1},
        {"tolerance": 0.0},
        {"max_iter": 0},
        {"C": 0.01, "epsilon": 0.0, "tolerance": 0.05},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(InvalidParameter):
        SvrConfig(**kwargs)


def test_constant_targets_give_constant_model(caplog):
    X = np.random.default_rng(0).normal(size=(10, 3))

    with caplog.at_level(logging.WARNING, logger="fxlab"):
        model = fit_svr(X, np.full(10, 7.0), SvrConfig())

    assert model.degenerate
    assert model.dual_coefs.size == 0
    assert model.bias == 7.0
    np.testing.assert_array_equal(predict_many(model, X), 7.0)
    assert "tube" in caplog.text


def test_single_support_vector_prediction():
    model = SvrModel(
        support_vectors=np.array([[0.0, 0.0]]),
        dual_coefs=np.array([2.0]),
        bias=0.0,
        config=SvrConfig(gamma=0.5),
    )

    assert predict_svr(model, [0.0, 0.0]) == 2.0
    assert predict_svr(model, [1.0, 0.0]) == pytest.approx(2 * math.exp(-0.5))
    with pytest.raises(DimensionMismatch):
        predict_svr(model, [0.0, 0.0, 0.0])


def test_predict_many_matches_kernel_expansion():
    X, y = sample(1)
    model = fit_svr(X, y, SvrConfig(C=10.0, gamma=0.5, epsilon=0.05))
    queries = np.random.default_rng(2).uniform(-1, 1, size=(15, 2))

    predictions = predict_many(model, queries)

    for query, prediction in zip(queries, predictions):
        expected = model.bias + sum(
            coef * rbf_kernel(vector, query, model.config.gamma)
            for coef, vector in zip(model.dual_coefs, model.support_vectors)
        )
        assert prediction == pytest.approx(expected, abs=1e-12)
        assert predict_svr(model, query) == pytest.approx(prediction, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_solution_satisfies_optimality_conditions(seed):
    X, y = sample(seed)
    config = SvrConfig(C=10.0, gamma=0.5, epsilon=0.05)

    model = fit_svr(X, y, config)

    assert kkt_violation(model, X, y) <= 10 * config.tolerance
    assert abs(model.dual_coefs.sum()) < 1e-9
    assert np.all(np.abs(model.dual_coefs) <= config.C + 1e-12)
    assert model.max_violation < config.tolerance
    np.testing.assert_array_equal(model.support_vectors, X[model.support_indices])


def reference_solution(X, y, config):
    """Best dual objective and coefficients found by a general-purpose constrained
    optimizer."""

    n = y.size
    gram = np.exp(-config.gamma * np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1))

    def negative_dual(z):
        beta = z[:n] - z[n:]
        return 0.5 * beta @ gram @ beta + config.epsilon * z.sum() - y @ beta

    def gradient(z):
        beta_grad = gram @ (z[:n] - z[n:]) - y
        return np.concatenate([beta_grad + config.epsilon, -beta_grad + config.epsilon])

    result = minimize(
        negative_dual,
        np.zeros(2 * n),
        jac=gradient,
        method="SLSQP",
        bounds=[(0.0, config.C)] * (2 * n),
        constraints=[{"type": "eq", "fun": lambda z: z[:n].sum() - z[n:].sum()}],
        options={"maxiter": 1000, "ftol": 1e-12},
    )
    return -result.fun, result.x[:n] - result.x[n:], gram


def reference_bias(residuals, epsilon):
    """Middle of the interval of offsets minimizing the epsilon-insensitive loss of
    `residuals`. The loss is piecewise linear, so its minima sit on the knots."""

    knots = np.concatenate([residuals - epsilon, residuals + epsilon])
    losses = np.array(
        [np.maximum(np.abs(residuals - knot) - epsilon, 0.0).sum() for knot in knots]
    )
    best = knots[losses <= losses.min() + 1e-9]
    return (best.min() + best.max()) / 2


@pytest.mark.slow
def test_fit_matches_reference_optimizer():
    config = SvrConfig(C=1.0, gamma=0.5, epsilon=0.1, tolerance=1e-6)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 21))
        d = int(rng.integers(1, 5))
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)

        model = fit_svr(X, y, config)

        assert kkt_violation(model, X, y) <= 10 * config.tolerance
        assert abs(model.dual_coefs.sum()) < 1e-9
        reference, beta, gram = reference_solution(X, y, config)
        assert dual_objective(model, X, y) >= reference - 1e-4 * max(1.0, abs(reference))
        fitted = gram @ beta
        expected = fitted + reference_bias(y - fitted, config.epsilon)
        errors = predict_many(model, X) - expected
        assert np.sqrt(np.mean(errors**2)) < 1e-3, f"seed {seed}"


def test_dual_objective_uses_training_data():
    X, y = sample(2, n=15)
    model = fit_svr(X, y, SvrConfig(C=10.0, gamma=0.5, epsilon=0.05))
    beta = np.zeros(15)
    beta[model.support_indices] = model.dual_coefs
    gram = np.array([[rbf_kernel(a, b, 0.5) for b in X] for a in X])

    expected = -0.5 * beta @ gram @ beta - 0.05 * np.abs(beta).sum() + y @ beta

    assert dual_objective(model, X, y) == pytest.approx(expected, rel=1e-12)
    assert dual_objective(model, X, y + 3.0) == pytest.approx(expected, abs=1e-9)
    with pytest.raises(DimensionMismatch):
        dual_objective(model, X[:, :1], y)
    with pytest.raises(DimensionMismatch):
        dual_objective(model, X[:5], y[:5])


@pytest.mark.parametrize("shift", [100.0, -3.25])
def test_translated_targets_shift_predictions(shift):
    X, y = sample(3)
    config = SvrConfig(C=10.0, gamma=0.5, epsilon=0.05)

    base = fit_svr(X, y, config)
    shifted = fit_svr(X, y + shift, config)

    np.testing.assert_allclose(
        predict_many(shifted, X) - predict_many(base, X), shift, atol=1e-8
    )


def test_debug_checks_monotone_dual():
    X, y = sample(4, n=25)

    model = fit_svr(X, y, SvrConfig(C=10.0, gamma=0.5, epsilon=0.05, debug=True))

    assert model.iterations > 0


def test_fit_svr_errors():
    X, y = sample(5, n=10)

    with pytest.raises(DimensionMismatch):
        fit_svr(X, y[:-1], SvrConfig())
    with pytest.raises(InvalidParameter):
        fit_svr(X[:1], y[:1], SvrConfig())
    with pytest.raises(InvalidParameter):
        fit_svr(np.where(X == X[0, 0], np.nan, X), y, SvrConfig())
    with pytest.raises(NoConvergence) as error:
        fit_svr(X, y, SvrConfig(C=10.0, gamma=0.5, epsilon=0.01, max_iter=1))
    assert error.value.iterations == 1


def test_model_serialization():
    X, y = sample(6, n=20)
    model = fit_svr(X, y, SvrConfig(C=10.0, gamma=0.5, epsilon=0.05))

    restored = SvrModel.from_dict(json.loads(json.dumps(model.to_dict())))

    assert "debug" not in model.to_dict()["config"]
    np.testing.assert_allclose(predict_many(restored, X), predict_many(model, X))
    degenerate = fit_svr(X, np.zeros(20), SvrConfig())
    assert SvrModel.from_dict(degenerate.to_dict()).n_features == 2


def test_expand_grid():
    base = SvrConfig(C=5.0, gamma=0.1, epsilon=0.2, tolerance=1e-4)

    grid = expand_grid(base, [1.0, 10.0], [], [0.01, 0.1])

    assert [(cell.C, cell.gamma, cell.epsilon) for cell in grid] == [
        (1.0, 0.1, 0.01),
        (1.0, 0.1, 0.1),
        (10.0, 0.1, 0.01),
        (10.0, 0.1, 0.1),
    ]
    assert all(cell.tolerance == 1e-4 for cell in grid)


def test_grid_search_single_candidate():
    X, y = sample(7, n=60)
    only = SvrConfig(C=10.0, gamma=0.5, epsilon=0.05)

    best, table = grid_search(X, y, [only], folds=3)

    assert best == only
    assert list(table.columns) == ["C", "gamma", "epsilon", "mean_rmse", "folds", "error"]
    assert len(table) == 1
    assert table.loc[0, "folds"] == 3


def test_grid_search_records_failed_cells():
    X, y = sample(8, n=60)
    failing = SvrConfig(C=10.0, gamma=0.5, epsilon=0.01, max_iter=1)
    working = SvrConfig(C=1.0, gamma=0.5, epsilon=0.05)

    best, table = grid_search(X, y, [failing, working], folds=3)

    assert best == working
    assert len(table) == 2
    assert math.isnan(table.loc[0, "mean_rmse"])
    assert table.loc[0, "error"]
    assert table.loc[1, "error"] == ""
    with pytest.raises(AllCellsFailed):
        grid_search(X, y, [failing], folds=3)


@pytest.mark.parametrize(
    "grid, folds, n",
    [([], 3, 60), ([SvrConfig()], 1, 60), ([SvrConfig()], 5, 5)],
)
def test_grid_search_errors(grid, folds, n):
    X, y = sample(9, n=n)

    with pytest.raises(InvalidParameter):
        grid_search(X, y, grid, folds)
