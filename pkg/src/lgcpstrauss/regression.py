"""Relaxed-Lasso projection regressions for the pilot stage.

lasso_fit minimizes (1/2k) ||y - a - X b||^2 + lambda ||b||_1 by cyclic
coordinate descent on internally standardized predictors (Gram updates);
cv_lambda_1se picks the penalty by 10-fold cross-validation with the
one-standard-error rule; relaxed_lasso_fit refits the selected support by
ordinary least squares and records the fitted-value variance used as the
weight in the ABC distance.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ValidationError, as_generator

log = logging.getLogger(__name__)

CD_TOL = 1e-7
CD_MAX_SWEEPS = 100_000
LAMBDA_PATH_LEN = 100
LAMBDA_MIN_RATIO = 1e-4
CV_FOLDS = 10


class ConvergenceError(RuntimeError):
    """Coordinate descent failed to reach the tolerance."""


@dataclass(frozen=True)
class RegressionData:
    """Predictor matrix and response for one projection regression."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValidationError(f"bad regression shapes {X.shape} / {y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValidationError("regression data must be finite")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)

    @property
    def k(self) -> int:
        return self.design.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class LassoResult:
    intercept: float
    coef: np.ndarray  # original predictor scale
    coef_std: np.ndarray  # standardized predictor scale
    lam: float
    n_sweeps: int


@dataclass(frozen=True)
class ProjectionModel:
    """OLS refit on the Lasso-selected support, ready for prediction.

    predict(x) = intercept + coef . x with x on the caller's predictor
    scale (for the ABC pipeline that is T(x) - T_obs, so the prediction at
    the observed data is exactly the intercept).  fitted_variance is the
    empirical variance of the fitted values over the training rows;
    degenerate marks an empty support (zero variance), which the distance
    must skip.
    """

    intercept: float
    coef: np.ndarray
    support: np.ndarray
    fitted_variance: float
    lam: float
    coef_std: np.ndarray = field(default=None, repr=False)

    @property
    def degenerate(self) -> bool:
        return self.support.size == 0 or self.fitted_variance <= 0.0

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.intercept + self.coef @ x)


def _soft_threshold(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _standardize(X):
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    return (X - mean) / sd_safe, mean, sd, sd_safe


def _cd_solve(G, gdiag, active, c, beta, lam, callback=None) -> int:
    """Cyclic coordinate descent in place; returns the sweep count."""
    for sweep in range(CD_MAX_SWEEPS):
        delta = 0.0
        for j in range(beta.size):
            if not active[j]:
                continue
            rho = c[j] - G[j] @ beta + gdiag[j] * beta[j]
            bj = _soft_threshold(rho, lam) / gdiag[j]
            dj = abs(bj - beta[j])
            if dj > delta:
                delta = dj
            beta[j] = bj
        if callback is not None:
            callback(beta.copy())
        if delta < CD_TOL:
            return sweep + 1
    raise ConvergenceError(
        f"coordinate descent hit {CD_MAX_SWEEPS} sweeps at lambda={lam:g}; "
        f"last max change {delta:.3e}"
    )


def _gram(Xs, yc):
    k = Xs.shape[0]
    G = (Xs.T @ Xs) / k
    c = (Xs.T @ yc) / k
    gdiag = np.diag(G).copy()
    return G, gdiag, gdiag > 0, c  # constant columns can never activate


def lasso_fit(data: RegressionData, lam: float, callback=None) -> LassoResult:
    """Lasso solution at a single penalty value (callback sees each sweep)."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    Xs, mean, sd, sd_safe = _standardize(data.design)
    ybar = data.response.mean()
    G, gdiag, active, c = _gram(Xs, data.response - ybar)
    beta = np.zeros(data.d)
    n_sweeps = _cd_solve(G, gdiag, active, c, beta, lam, callback)
    coef = beta / sd_safe
    intercept = ybar - float(coef @ mean)
    return LassoResult(intercept, coef, beta.copy(), lam, n_sweeps)


def _cd_path(Xs, yc, lams):
    """Warm-started descent down a lambda path; (len(lams), d) std-scale betas."""
    G, gdiag, active, c = _gram(Xs, yc)
    beta = np.zeros(Xs.shape[1])
    out = np.empty((len(lams), beta.size))
    for li, lam in enumerate(lams):
        _cd_solve(G, gdiag, active, c, beta, lam)
        out[li] = beta
    return out


def lambda_path(Xs, yc, length=LAMBDA_PATH_LEN, min_ratio=LAMBDA_MIN_RATIO):
    k = Xs.shape[0]
    lam_max = float(np.max(np.abs(Xs.T @ yc)) / k)
    if lam_max <= 0:
        lam_max = 1.0  # constant response; any path selects the empty model
    return np.geomspace(lam_max, min_ratio * lam_max, length)


def cv_lambda_1se(data: RegressionData, n_folds: int = CV_FOLDS, seed=0) -> float:
    """Largest lambda whose CV error is within one SE of the minimum.

    The path is 100 log-spaced values from lambda_max down by 1e-4; folds
    come from a seeded permutation, so the result is deterministic given
    (data, seed).
    """
    if data.k < n_folds:
        raise ValidationError(f"need at least {n_folds} rows, got {data.k}")
    Xs_full, _, _, _ = _standardize(data.design)
    yc_full = data.response - data.response.mean()
    lams = lambda_path(Xs_full, yc_full)
    rng = as_generator(seed)
    perm = rng.permutation(data.k)
    folds = np.array_split(perm, n_folds)
    fold_mse = np.empty((n_folds, len(lams)))
    for fi, holdout in enumerate(folds):
        mask = np.ones(data.k, dtype=bool)
        mask[holdout] = False
        Xtr, mean, sd, sd_safe = _standardize(data.design[mask])
        ytr = data.response[mask]
        betas = _cd_path(Xtr, ytr - ytr.mean(), lams)
        Xval = (data.design[holdout] - mean) / sd_safe
        preds = ytr.mean() + Xval @ betas.T
        resid = data.response[holdout][:, None] - preds
        fold_mse[fi] = np.mean(resid**2, axis=0)
    cv = fold_mse.mean(axis=0)
    best = int(np.argmin(cv))
    se = float(fold_mse[:, best].std(ddof=1) / np.sqrt(n_folds))
    ok = np.flatnonzero(cv <= cv[best] + se)
    return float(lams[ok[0]])  # path is descending, so first hit = largest lambda


def relaxed_lasso_fit(data: RegressionData, n_folds: int = CV_FOLDS, seed=0) -> ProjectionModel:
    """CV-tuned Lasso for support selection, then an OLS refit on the support."""
    lam = cv_lambda_1se(data, n_folds=n_folds, seed=seed)
    lasso = lasso_fit(data, lam)
    support = np.flatnonzero(lasso.coef_std != 0.0)
    d = data.d
    if support.size == 0:
        log.info("empty Lasso support; projection degenerates to the intercept")
        return ProjectionModel(
            intercept=float(data.response.mean()),
            coef=np.zeros(d),
            support=support,
            fitted_variance=0.0,
            lam=lam,
            coef_std=np.zeros(d),
        )
    Xsel = data.design[:, support]
    A = np.column_stack([np.ones(data.k), Xsel])
    sol, *_ = np.linalg.lstsq(A, data.response, rcond=None)
    coef = np.zeros(d)
    coef[support] = sol[1:]
    fitted = A @ sol
    coef_std = coef * data.design.std(axis=0)
    return ProjectionModel(
        intercept=float(sol[0]),
        coef=coef,
        support=support,
        fitted_variance=float(np.var(fitted, ddof=1)),
        lam=lam,
        coef_std=coef_std,
    )
