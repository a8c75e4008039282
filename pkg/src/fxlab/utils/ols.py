"""Ordinary least squares kernel shared by the hypothesis tests and the VAR."""

from typing import NamedTuple

import numpy as np

from fxlab.errors import SingularRegression


class OlsFit(NamedTuple):
    coef: np.ndarray
    residuals: np.ndarray
    rss: np.ndarray | float
    # (X'X)^-1, needed for coefficient standard errors
    xtx_inv: np.ndarray


def ols(y: np.ndarray, X: np.ndarray) -> OlsFit:
    """Least-squares fit of `y` (vector or matrix of responses) on `X`.

    Raises `SingularRegression` if `X` does not have full column rank."""

    n, k = X.shape
    if n < k:
        raise SingularRegression(
            f"Design matrix has {k} columns but only {n} observations."
        )
    coef, _, rank, singular_values = np.linalg.lstsq(X, y, rcond=None)
    # Relative threshold as `matrix_rank`, so that near-collinear designs are refused
    tol = singular_values.max() * max(n, k) * np.finfo(float).eps
    if rank < k or singular_values.min() <= tol:
        raise SingularRegression(
            f"Design matrix is rank deficient (rank {rank} < {k} columns)."
        )
    residuals = y - X @ coef
    rss = np.sum(residuals**2, axis=0)
    xtx_inv = np.linalg.inv(X.T @ X)
    return OlsFit(coef=coef, residuals=residuals, rss=rss, xtx_inv=xtx_inv)
