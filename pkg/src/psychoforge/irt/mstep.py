"""Per-item M-step objectives for marginal maximum likelihood.

Each family gets an expected complete-data log-likelihood over the
quadrature nodes, with analytic gradient and Fisher information. The
internal parametrizations keep the binary and categorical objectives
concave (or nearly so for 3PL), which is what makes plain Fisher scoring
with step halving reliable:

  2PL   x = (alpha, beta),    logit = alpha * theta + beta
  3PL   x = (alpha, beta, gamma), c = c_bound * sigmoid(gamma)
  GPCM  x = (a, c_1..c_K),    s_k = a * k * theta + c_k
  NRM   x = (a_1..a_K, c_1..c_K), s_k = a_k * theta + c_k

Public parameters (a, b difficulties) are recovered after convergence.
"""

from __future__ import annotations

import numpy as np

from .models import BINARY_FAMILIES, ItemFamily, ItemParams

GAMMA_LIMIT = 8.0  # keeps the 3PL asymptote parameter identifiable


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.clip(z, -700, 700)))


def to_internal(params: ItemParams, c_bound: float = 0.5) -> np.ndarray:
    """Public (a, b, c) to the optimization vector."""
    if params.family is ItemFamily.TWO_PL:
        return np.array([params.a, -params.a * params.b])
    if params.family is ItemFamily.THREE_PL:
        frac = np.clip(params.c / c_bound, 1e-6, 1.0 - 1e-6)
        gamma = np.log(frac / (1.0 - frac))
        return np.array([params.a, -params.a * params.b, gamma])
    if params.family is ItemFamily.GPCM:
        return np.concatenate([[params.a], -params.a * np.cumsum(params.b)])
    return np.concatenate([params.a, -params.a * params.b])


def from_internal(family: ItemFamily, x: np.ndarray, c_bound: float = 0.5) -> ItemParams:
    """Optimization vector back to public (a, b, c)."""
    if family is ItemFamily.TWO_PL:
        alpha, beta = x
        return ItemParams(family=family, a=alpha, b=-beta / alpha)
    if family is ItemFamily.THREE_PL:
        alpha, beta, gamma = x
        return ItemParams(family=family, a=alpha, b=-beta / alpha, c=c_bound * float(_sigmoid(np.asarray(gamma))))
    if family is ItemFamily.GPCM:
        a, c = x[0], x[1:]
        cum_b = -c / a
        b = np.diff(np.concatenate([[0.0], cum_b]))
        return ItemParams(family=family, a=a, b=b)
    k = len(x) // 2
    a, c = x[:k], x[k:]
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(np.abs(a) > 1e-12, -c / a, 0.0)
    return ItemParams(family=family, a=a, b=b)


def _category_features(family: ItemFamily, nodes: np.ndarray, n_cat: int) -> np.ndarray:
    """Design tensor F[q, k, p] such that s_qk = F[q, k] @ x (category 0 fixed at 0)."""
    q = len(nodes)
    k_count = n_cat - 1
    if family is ItemFamily.GPCM:
        n_par = 1 + k_count
        f = np.zeros((q, n_cat, n_par))
        for k in range(1, n_cat):
            f[:, k, 0] = k * nodes
            f[:, k, k] = 1.0
    elif family is ItemFamily.NRM:
        n_par = 2 * k_count
        f = np.zeros((q, n_cat, n_par))
        for k in range(1, n_cat):
            f[:, k, k - 1] = nodes
            f[:, k, k_count + k - 1] = 1.0
    else:
        raise ValueError("feature tensor applies to GPCM/NRM")
    return f


def categorical_objective(
    family: ItemFamily, x: np.ndarray, nodes: np.ndarray, r_qk: np.ndarray
) -> tuple[float, np.ndarray]:
    """Expected log-likelihood and gradient for a GPCM/NRM item.

    r_qk holds expected response counts per node and category.
    """
    f = _category_features(family, nodes, r_qk.shape[1])
    s = np.einsum("qkp,p->qk", f, x)
    s -= s.max(axis=1, keepdims=True)
    log_pi = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    pi = np.exp(log_pi)
    ll = float(np.sum(r_qk * log_pi))
    n_q = r_qk.sum(axis=1)
    f_bar = np.einsum("qk,qkp->qp", pi, f)
    grad = np.einsum("qk,qkp->p", r_qk, f) - n_q @ f_bar
    return ll, grad


def categorical_fisher(
    family: ItemFamily, x: np.ndarray, nodes: np.ndarray, r_qk: np.ndarray
) -> np.ndarray:
    """Expected information matrix of the categorical objective (exact Hessian
    with sign flipped, since the logits are linear in x)."""
    f = _category_features(family, nodes, r_qk.shape[1])
    s = np.einsum("qkp,p->qk", f, x)
    s -= s.max(axis=1, keepdims=True)
    e = np.exp(s)
    pi = e / e.sum(axis=1, keepdims=True)
    n_q = r_qk.sum(axis=1)
    f_bar = np.einsum("qk,qkp->qp", pi, f)
    second = np.einsum("q,qk,qkp,qkr->pr", n_q, pi, f, f)
    outer = np.einsum("q,qp,qr->pr", n_q, f_bar, f_bar)
    return second - outer


def binary_objective(
    family: ItemFamily,
    x: np.ndarray,
    nodes: np.ndarray,
    n_q: np.ndarray,
    r_q: np.ndarray,
    c_bound: float = 0.5,
) -> tuple[float, np.ndarray]:
    """Expected log-likelihood and gradient for a 2PL/3PL item.

    n_q is the expected number of responders at each node, r_q the expected
    number of correct responses.
    """
    sigma = _sigmoid(x[0] * nodes + x[1])
    if family is ItemFamily.THREE_PL:
        c = c_bound * float(_sigmoid(np.asarray(x[2])))
        pi = c + (1.0 - c) * sigma
    else:
        c = 0.0
        pi = sigma
    pi = np.clip(pi, 1e-12, 1.0 - 1e-12)
    ll = float(r_q @ np.log(pi) + (n_q - r_q) @ np.log(1.0 - pi))
    resid = r_q / pi - (n_q - r_q) / (1.0 - pi)
    dpi_deta = (1.0 - c) * sigma * (1.0 - sigma)
    grad = [resid @ (dpi_deta * nodes), resid @ dpi_deta]
    if family is ItemFamily.THREE_PL:
        dc_dgamma = c * (1.0 - c / c_bound)
        grad.append((resid @ (1.0 - sigma)) * dc_dgamma)
    return ll, np.array(grad)


def binary_fisher(
    family: ItemFamily,
    x: np.ndarray,
    nodes: np.ndarray,
    n_q: np.ndarray,
    c_bound: float = 0.5,
) -> np.ndarray:
    """Expected information sum_q n_q (dpi/dx)(dpi/dx)^T / (pi (1 - pi))."""
    sigma = _sigmoid(x[0] * nodes + x[1])
    if family is ItemFamily.THREE_PL:
        c = c_bound * float(_sigmoid(np.asarray(x[2])))
        pi = c + (1.0 - c) * sigma
    else:
        c = 0.0
        pi = sigma
    pi = np.clip(pi, 1e-12, 1.0 - 1e-12)
    dpi_deta = (1.0 - c) * sigma * (1.0 - sigma)
    cols = [dpi_deta * nodes, dpi_deta]
    if family is ItemFamily.THREE_PL:
        dc_dgamma = c * (1.0 - c / c_bound)
        cols.append((1.0 - sigma) * dc_dgamma)
    jac = np.column_stack(cols)
    w = n_q / (pi * (1.0 - pi))
    return jac.T @ (jac * w[:, None])


def expected_objective(
    family: ItemFamily,
    x: np.ndarray,
    nodes: np.ndarray,
    r_qk: np.ndarray,
    c_bound: float = 0.5,
) -> tuple[float, np.ndarray]:
    """Family dispatch working from the (Q, K+1) expected-count table."""
    if family in BINARY_FAMILIES:
        n_q = r_qk.sum(axis=1)
        return binary_objective(family, x, nodes, n_q, r_qk[:, 1], c_bound)
    return categorical_objective(family, x, nodes, r_qk)


def _fisher(family, x, nodes, r_qk, c_bound):
    if family in BINARY_FAMILIES:
        return binary_fisher(family, x, nodes, r_qk.sum(axis=1), c_bound)
    return categorical_fisher(family, x, nodes, r_qk)


def maximize_item(
    family: ItemFamily,
    x0: np.ndarray,
    nodes: np.ndarray,
    r_qk: np.ndarray,
    *,
    c_bound: float = 0.5,
    newton_steps: int = 3,
    max_halvings: int = 10,
) -> np.ndarray:
    """Generalized M-step: a few Fisher-scoring steps with halving.

    Never returns a point with lower expected log-likelihood than x0, which
    is what gives the outer EM its monotone marginal likelihood.
    """
    x = np.asarray(x0, dtype=float).copy()
    ll, grad = expected_objective(family, x, nodes, r_qk, c_bound)
    for _ in range(newton_steps):
        fisher = _fisher(family, x, nodes, r_qk, c_bound)
        fisher = fisher + 1e-10 * np.eye(len(x))
        try:
            step = np.linalg.solve(fisher, grad)
        except np.linalg.LinAlgError:
            break
        improved = False
        for _ in range(max_halvings + 1):
            cand = x + step
            if family is ItemFamily.THREE_PL:
                cand[2] = np.clip(cand[2], -GAMMA_LIMIT, GAMMA_LIMIT)
            cand_ll, cand_grad = expected_objective(family, cand, nodes, r_qk, c_bound)
            if np.isfinite(cand_ll) and cand_ll >= ll:
                x, ll, grad = cand, cand_ll, cand_grad
                improved = True
                break
            step = step / 2.0
        if not improved:
            break
        if np.max(np.abs(step)) < 1e-10:
            break
    return x
