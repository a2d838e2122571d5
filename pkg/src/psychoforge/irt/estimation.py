"""Marginal maximum likelihood estimation via EM.

The E-step computes person posteriors over a fixed quadrature grid; the
M-step runs a few Fisher-scoring steps per item on the expected
complete-data log-likelihood (see :mod:`psychoforge.irt.mstep`). Because
the M-step never decreases that expected log-likelihood, the marginal
log-likelihood is nondecreasing across cycles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import mstep
from .models import (
    BINARY_FAMILIES,
    IrtModel,
    ItemFamily,
    ItemParams,
    Quadrature,
    category_probabilities,
    normal_quadrature,
)


class EmFailure(RuntimeError):
    """Raised when the marginal likelihood turns non-finite."""

    def __init__(self, message: str, cycle: int):
        super().__init__(message)
        self.cycle = cycle


@dataclass(frozen=True)
class EmConfig:
    n_quad: int = 61
    quad_bounds: tuple[float, float] = (-6.0, 6.0)
    max_cycles: int = 500
    param_tol: float = 1e-4
    c_bound: float = 0.5
    start_c: float = 0.1
    newton_steps: int = 3
    max_halvings: int = 10
    min_persons: int = 50


def _as_matrix(scored) -> tuple[np.ndarray, tuple[str, ...], tuple[int, ...]]:
    if hasattr(scored, "scores"):
        return (
            np.asarray(scored.scores, dtype=float),
            tuple(scored.item_names),
            tuple(int(k) for k in scored.max_scores),
        )
    arr = np.asarray(scored, dtype=float)
    names = tuple(f"item{i + 1}" for i in range(arr.shape[1]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        maxes = tuple(int(np.nanmax(arr[:, i])) if np.any(np.isfinite(arr[:, i])) else 1 for i in range(arr.shape[1]))
    return arr, names, maxes


def _initial_internal(family: ItemFamily, y: np.ndarray, k: int, config: EmConfig) -> np.ndarray:
    """Start values: unit slopes, difficulties from marginal category usage."""
    if family in BINARY_FAMILIES:
        p_hat = float(np.clip(np.mean(y), 0.02, 0.98))
        beta = np.log(p_hat / (1.0 - p_hat))
        if family is ItemFamily.THREE_PL:
            frac = config.start_c / config.c_bound
            gamma = np.log(frac / (1.0 - frac))
            return np.array([1.0, beta, gamma])
        return np.array([1.0, beta])
    b = np.linspace(-1.0, 1.0, k) if k > 1 else np.array([0.0])
    if family is ItemFamily.GPCM:
        return np.concatenate([[1.0], -np.cumsum(b)])
    return np.concatenate([np.ones(k), -b])


def _log_prob_tables(
    internal: list[np.ndarray | None],
    families: list[ItemFamily],
    nodes: np.ndarray,
    c_bound: float,
) -> list[np.ndarray | None]:
    tables = []
    for x, family in zip(internal, families):
        if x is None:
            tables.append(None)
            continue
        params = mstep.from_internal(family, x, c_bound)
        p = category_probabilities(params, nodes)
        tables.append(np.log(np.clip(p, 1e-300, None)))
    return tables


def _posteriors(
    y: np.ndarray,
    log_tables: list[np.ndarray | None],
    log_prior: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Posterior weights (n, Q) and the marginal log-likelihood."""
    n = y.shape[0]
    log_lik = np.zeros((n, len(log_prior)))
    for i, table in enumerate(log_tables):
        if table is None:
            continue
        col = y[:, i]
        mask = col >= 0
        if not np.any(mask):
            continue
        log_lik[mask] += table[:, col[mask]].T
    joint = log_lik + log_prior[None, :]
    peak = joint.max(axis=1, keepdims=True)
    shifted = np.exp(joint - peak)
    norm = shifted.sum(axis=1, keepdims=True)
    marginal = float(np.sum(peak[:, 0] + np.log(norm[:, 0])))
    return shifted / norm, marginal


def _expected_counts(y_col: np.ndarray, w: np.ndarray, n_cat: int) -> np.ndarray:
    mask = y_col >= 0
    if not np.any(mask):
        return np.zeros((w.shape[1], n_cat))
    onehot = np.zeros((int(mask.sum()), n_cat))
    onehot[np.arange(len(onehot)), y_col[mask]] = 1.0
    return w[mask].T @ onehot


def fit_mml_em(
    scored,
    families,
    *,
    config: EmConfig | None = None,
    quadrature: Quadrature | None = None,
) -> IrtModel:
    """Fit a mixed-family model to a scored response matrix.

    ``scored`` is a ScoredMatrix or plain (persons, items) float array with
    NaN for missing; entries are category codes 0..K per item. ``families``
    gives one ItemFamily (or its string value) per item.
    """
    config = config or EmConfig()
    matrix, item_names, max_scores = _as_matrix(scored)
    n_persons, n_items = matrix.shape
    families = [ItemFamily(f) for f in families]
    if len(families) != n_items:
        raise ValueError("one family per item required")

    diagnostics: list[str] = []
    observed = np.isfinite(matrix)
    frac = matrix[observed]
    if frac.size and np.any(np.abs(frac - np.round(frac)) > 1e-9):
        raise ValueError("responses must be integer category codes")
    y = np.where(observed, matrix, -1).astype(int)

    n_cats: list[int] = []
    active: list[bool] = []
    for i in range(n_items):
        col = y[:, i][y[:, i] >= 0]
        family = families[i]
        k = 1 if family in BINARY_FAMILIES else max(int(max_scores[i]), 1)
        if col.size and col.max() > k:
            raise ValueError(
                f"item {item_names[i]!r} has code {col.max()} above its maximum {k}"
            )
        n_cats.append(k + 1)
        if col.size == 0:
            active.append(False)
            diagnostics.append(f"item {item_names[i]!r} excluded: no observed responses")
        elif np.all(col == col[0]):
            active.append(False)
            diagnostics.append(f"item {item_names[i]!r} excluded: constant responses")
        else:
            active.append(True)
            present = np.bincount(col, minlength=k + 1)
            for cat in np.flatnonzero(present == 0):
                diagnostics.append(
                    f"item {item_names[i]!r}: category {cat} never observed"
                )
    if sum(active) < 2:
        raise ValueError("need at least 2 items with response variation")

    if n_persons < config.min_persons:
        note = f"only {n_persons} persons; parameter estimates will be unstable"
        diagnostics.append(note)
        warnings.warn(note, stacklevel=2)

    quad = quadrature or normal_quadrature(config.n_quad, config.quad_bounds)
    nodes = quad.nodes
    log_prior = np.log(quad.weights)

    internal: list[np.ndarray | None] = [
        _initial_internal(families[i], y[:, i][y[:, i] >= 0], n_cats[i] - 1, config)
        if active[i]
        else None
        for i in range(n_items)
    ]
    fam_for_tables = families

    history: list[float] = []
    converged = False
    cycles = 0
    for cycle in range(config.max_cycles):
        cycles = cycle + 1
        tables = _log_prob_tables(internal, fam_for_tables, nodes, config.c_bound)
        w, marginal = _posteriors(y, tables, log_prior)
        if not np.isfinite(marginal):
            raise EmFailure("marginal log-likelihood is not finite", cycle)
        history.append(marginal)

        delta = 0.0
        for i in range(n_items):
            if internal[i] is None:
                continue
            r_qk = _expected_counts(y[:, i], w, n_cats[i])
            new_x = mstep.maximize_item(
                families[i],
                internal[i],
                nodes,
                r_qk,
                c_bound=config.c_bound,
                newton_steps=config.newton_steps,
                max_halvings=config.max_halvings,
            )
            delta = max(delta, float(np.max(np.abs(new_x - internal[i]))))
            internal[i] = new_x
        if delta < config.param_tol:
            converged = True
            break

    tables = _log_prob_tables(internal, fam_for_tables, nodes, config.c_bound)
    _, final_ll = _posteriors(y, tables, log_prior)
    if not np.isfinite(final_ll):
        raise EmFailure("marginal log-likelihood is not finite", cycles)
    history.append(final_ll)
    if not converged:
        diagnostics.append(f"EM stopped at max_cycles={config.max_cycles} without converging")

    items: list[ItemParams | None] = [
        mstep.from_internal(families[i], internal[i], config.c_bound)
        if internal[i] is not None
        else None
        for i in range(n_items)
    ]
    return IrtModel(
        items=tuple(items),
        quadrature=quad,
        item_names=item_names,
        loglik=final_ll,
        em_cycles=cycles,
        converged=converged,
        diagnostics=tuple(diagnostics),
        loglik_history=tuple(history),
    )


def simulate_responses(items, theta, rng: np.random.Generator) -> np.ndarray:
    """Draw a (persons, items) category-code matrix from item parameters."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.full((len(theta), len(items)), np.nan)
    for i, params in enumerate(items):
        if params is None:
            continue
        p = category_probabilities(params, theta)
        u = rng.random(len(theta))
        out[:, i] = np.minimum((u[:, None] > np.cumsum(p, axis=1)).sum(axis=1), p.shape[1] - 1)
    return out
