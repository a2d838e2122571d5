"""Regression-based item characteristic curves on an observed ability proxy.

Two fitters: plain binary logistic regression solved by iteratively
reweighted least squares, and its guessing extension with a lower asymptote
estimated under a box constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

IRLS_TOL = 1e-8
IRLS_MAX_ITER = 50


class SeparationError(ValueError):
    """The outcome is perfectly separated along the predictor."""

    def __init__(self, message: str, direction: int = 0):
        super().__init__(message)
        self.direction = direction


class DegenerateOutcomeError(ValueError):
    """The outcome vector contains a single class."""


@dataclass(frozen=True)
class LogisticFit:
    """Maximum-likelihood logistic curve P(y=1) = 1/(1+exp(-b0-b1*theta))."""

    beta0: float
    beta1: float
    vcov: np.ndarray
    loglik: float
    converged: bool
    iterations: int

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1])


@dataclass(frozen=True)
class Guessing3plFit:
    """Logistic curve with a lower asymptote: c + (1-c)/(1+exp(-b0-b1*theta))."""

    beta0: float
    beta1: float
    c: float
    loglik: float
    converged: bool


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    z = np.exp(eta[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def _bernoulli_loglik(y: np.ndarray, p: np.ndarray) -> float:
    eps = np.finfo(float).tiny
    return float(np.sum(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)))


def logistic_loglik_grad(beta: np.ndarray, x_design: np.ndarray, y: np.ndarray):
    """Log-likelihood and score vector of a logistic model on a design matrix."""
    p = _sigmoid(x_design @ beta)
    return _bernoulli_loglik(y, p), x_design.T @ (y - p)


def irls(x_design: np.ndarray, y: np.ndarray, *, tol: float = IRLS_TOL, max_iter: int = IRLS_MAX_ITER):
    """Iteratively reweighted least squares for logistic regression.

    Returns (beta, vcov, loglik, converged, iterations). Raises
    SeparationError when the iterates diverge towards a perfect fit.
    """
    n, k = x_design.shape
    beta = np.zeros(k)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        eta = x_design @ beta
        p = _sigmoid(eta)
        w = p * (1.0 - p)
        if np.max(w) < 1e-10 or np.max(np.abs(beta)) > 1e4:
            raise SeparationError("logistic fit diverged; data appear separated")
        xw = x_design * w[:, None]
        hess = x_design.T @ xw
        grad = x_design.T @ (y - p)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    p = _sigmoid(x_design @ beta)
    w = p * (1.0 - p)
    info = x_design.T @ (x_design * w[:, None])
    try:
        vcov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        vcov = np.linalg.pinv(info)
    return beta, vcov, _bernoulli_loglik(y, p), converged, iterations


def _check_binary_inputs(y: np.ndarray, theta: np.ndarray):
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    valid = ~np.isnan(y) & ~np.isnan(theta)
    y, theta = y[valid], theta[valid]
    if len(y) < 3:
        raise ValueError("need at least 3 complete pairs")
    if y.min() == y.max():
        raise DegenerateOutcomeError("outcome contains a single class")
    return y, theta


def fit_logistic(y, theta) -> LogisticFit:
    """Fit P(y=1|theta) = 1/(1+exp(-b0-b1*theta)) by IRLS."""
    y, theta = _check_binary_inputs(y, theta)
    hi0 = theta[y == 0].max()
    lo1 = theta[y == 1].min()
    if hi0 < lo1:
        raise SeparationError("complete separation: all successes above all failures", direction=+1)
    if theta[y == 1].max() < theta[y == 0].min():
        raise SeparationError("complete separation: all successes below all failures", direction=-1)
    x_design = np.column_stack([np.ones_like(theta), theta])
    beta, vcov, loglik, converged, iterations = irls(x_design, y)
    return LogisticFit(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        vcov=vcov,
        loglik=loglik,
        converged=converged,
        iterations=iterations,
    )


def guessing_curve(beta0: float, beta1: float, c: float, theta) -> np.ndarray:
    """Evaluate c + (1-c)/(1+exp(-b0-b1*theta))."""
    theta = np.asarray(theta, dtype=float)
    return c + (1.0 - c) * _sigmoid(beta0 + beta1 * theta)


def guessing_loglik_grad(params: np.ndarray, y: np.ndarray, theta: np.ndarray):
    """Log-likelihood and gradient of the guessing-extended logistic model.

    params = (beta0, beta1, c).
    """
    beta0, beta1, c = params
    sig = _sigmoid(beta0 + beta1 * theta)
    p = c + (1.0 - c) * sig
    eps = np.finfo(float).tiny
    dl_dp = y / (p + eps) - (1.0 - y) / (1.0 - p + eps)
    dp_deta = (1.0 - c) * sig * (1.0 - sig)
    grad = np.array(
        [
            np.sum(dl_dp * dp_deta),
            np.sum(dl_dp * dp_deta * theta),
            np.sum(dl_dp * (1.0 - sig)),
        ]
    )
    return _bernoulli_loglik(y, p), grad


MULTISTART_C = (0.0, 0.1, 0.25)
GUESSING_MAX_EVALS = 500


def fit_3pl_regression(y, theta, c_max: float = 0.99, fix_c: float | None = None) -> Guessing3plFit:
    """Maximize the guessing-model likelihood with c box-constrained to [0, c_max].

    Multistart over c in {0, 0.1, 0.25} (intersected with the box), slopes
    initialized from the plain logistic fit; the best final likelihood wins.
    """
    if fix_c is None and not 0.0 < c_max < 1.0:
        raise ValueError("c_max must lie in (0, 1)")
    y, theta = _check_binary_inputs(y, theta)
    base = fit_logistic(y, theta)

    if fix_c is not None:
        bounds_c = (fix_c, fix_c)
        starts = (fix_c,)
    else:
        bounds_c = (0.0, c_max)
        starts = tuple(min(c0, c_max) for c0 in MULTISTART_C)
    bounds = [(None, None), (None, None), bounds_c]

    def objective(params):
        ll, grad = guessing_loglik_grad(params, y, theta)
        return -ll, -grad

    best = None
    for c0 in starts:
        x0 = np.array([base.beta0, base.beta1, c0])
        res = optimize.minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxfun": GUESSING_MAX_EVALS, "ftol": 1e-12, "gtol": 1e-8},
        )
        if best is None or -res.fun > best[0]:
            best = (-res.fun, res)
    loglik, res = best
    beta0, beta1, c = res.x
    return Guessing3plFit(
        beta0=float(beta0),
        beta1=float(beta1),
        c=float(np.clip(c, bounds_c[0], bounds_c[1])),
        loglik=float(loglik),
        converged=bool(res.success),
    )


def icc_curve(fit: LogisticFit | Guessing3plFit, theta_grid) -> np.ndarray:
    """Pointwise response-probability curve of a fitted model."""
    c = getattr(fit, "c", 0.0)
    return guessing_curve(fit.beta0, fit.beta1, c, theta_grid)
