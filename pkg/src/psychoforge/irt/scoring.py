"""Person ability estimation from a fitted model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import BINARY_FAMILIES, IrtModel, category_probabilities, category_slopes, prob_3pl

THETA_BOUNDS = (-6.0, 6.0)


@dataclass(frozen=True)
class AbilityEstimate:
    theta: float
    se: float | None
    method: str
    boundary: bool = False

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "se": self.se,
            "method": self.method,
            "boundary": self.boundary,
        }


def _observed_items(model: IrtModel, responses) -> list[tuple[int, int]]:
    responses = np.asarray(responses, dtype=float)
    if responses.shape != (model.n_items,):
        raise ValueError(f"expected one response per item ({model.n_items})")
    pairs = []
    for i, value in enumerate(responses):
        if not np.isfinite(value) or model.items[i] is None:
            continue
        params = model.items[i]
        code = int(round(value))
        if code < 0 or code >= params.n_categories:
            raise ValueError(
                f"response {code} out of range for item {model.item_names[i]!r}"
            )
        pairs.append((i, code))
    if not pairs:
        raise ValueError("no scorable responses")
    return pairs


def posterior_weights(model: IrtModel, responses) -> np.ndarray:
    """Normalized posterior over the model's quadrature nodes."""
    pairs = _observed_items(model, responses)
    nodes = model.quadrature.nodes
    log_post = np.log(model.quadrature.weights)
    for i, code in pairs:
        p = category_probabilities(model.items[i], nodes)[:, code]
        log_post = log_post + np.log(np.clip(p, 1e-300, None))
    log_post -= log_post.max()
    w = np.exp(log_post)
    return w / w.sum()


def _eap(model: IrtModel, responses) -> AbilityEstimate:
    w = posterior_weights(model, responses)
    nodes = model.quadrature.nodes
    mean = float(w @ nodes)
    var = float(w @ nodes**2 - mean**2)
    return AbilityEstimate(theta=mean, se=float(np.sqrt(max(var, 0.0))), method="EAP")


def _loglik_derivs(model: IrtModel, pairs, theta: float) -> tuple[float, float, float]:
    """Response log-likelihood with first and second derivatives at theta."""
    ll = 0.0
    d1 = 0.0
    d2 = 0.0
    for i, code in pairs:
        params = model.items[i]
        if params.family in BINARY_FAMILIES:
            a, c = params.a, params.c
            z = a * (theta - params.b)
            sigma = 1.0 / (1.0 + np.exp(-np.clip(z, -700, 700)))
            pi = np.clip(c + (1.0 - c) * sigma, 1e-12, 1.0 - 1e-12)
            d_pi = a * (1.0 - c) * sigma * (1.0 - sigma)
            d2_pi = a * (1.0 - 2.0 * sigma) * d_pi
            y = float(code)
            ll += y * np.log(pi) + (1.0 - y) * np.log(1.0 - pi)
            u = (y - pi) / (pi * (1.0 - pi))
            ll_d1 = u * d_pi
            du = -d_pi / (pi * (1.0 - pi)) - (y - pi) * (1.0 - 2.0 * pi) * d_pi / (pi * (1.0 - pi)) ** 2
            ll_d2 = du * d_pi + u * d2_pi
            d1 += ll_d1
            d2 += ll_d2
        else:
            t = category_slopes(params)
            probs = category_probabilities(params, np.array([theta]))[0]
            mean_t = float(probs @ t)
            var_t = float(probs @ t**2 - mean_t**2)
            ll += float(np.log(np.clip(probs[code], 1e-300, None)))
            d1 += t[code] - mean_t
            d2 -= var_t
    return ll, d1, d2


def _ml(model: IrtModel, responses, *, tol: float = 1e-8, max_iter: int = 100) -> AbilityEstimate:
    pairs = _observed_items(model, responses)
    lo, hi = THETA_BOUNDS
    theta = 0.0
    for _ in range(max_iter):
        _, d1, d2 = _loglik_derivs(model, pairs, theta)
        # Damped Newton; at non-concave points fall back to an uphill step.
        step = -d1 / d2 if d2 < -1e-12 else float(np.sign(d1)) * 0.5
        step = float(np.clip(step, -1.0, 1.0))
        new_theta = float(np.clip(theta + step, lo, hi))
        moved = abs(new_theta - theta)
        theta = new_theta
        if moved < tol:
            break
    _, d1, d2 = _loglik_derivs(model, pairs, theta)
    at_bound = theta <= lo + 1e-12 or theta >= hi - 1e-12
    boundary = at_bound and abs(d1) > 1e-6
    if boundary or d2 >= -1e-12:
        return AbilityEstimate(theta=theta, se=None, method="ML", boundary=boundary)
    return AbilityEstimate(theta=theta, se=float(1.0 / np.sqrt(-d2)), method="ML")


def score_person(model: IrtModel, responses, method: str = "EAP") -> AbilityEstimate:
    """Estimate one person's latent trait.

    ``responses`` holds category codes aligned with the model's items; NaN
    or None marks missing. ``method`` is "EAP" (posterior mean over the
    quadrature grid) or "ML" (Newton search clamped to [-6, 6]; a boundary
    solution reports se = None and boundary = True).
    """
    method = method.upper()
    if method == "EAP":
        return _eap(model, responses)
    if method == "ML":
        return _ml(model, responses)
    raise ValueError(f"unknown scoring method {method!r}")


def score_matrix(model: IrtModel, matrix, method: str = "EAP") -> list[AbilityEstimate | None]:
    """Score each row; rows with no scorable responses come back as None."""
    matrix = np.asarray(matrix, dtype=float)
    results: list[AbilityEstimate | None] = []
    for row in matrix:
        try:
            results.append(score_person(model, row, method))
        except ValueError:
            results.append(None)
    return results
