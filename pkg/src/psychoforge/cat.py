"""Post-hoc adaptive-testing simulation.

Replays a fixed response pattern through the adaptive loop: pick the most
informative unadministered item at the current ability estimate, record the
replayed response, re-estimate, and stop once the standard error is small
enough, the item budget is spent, or the pool runs dry.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .irt.models import IrtModel, category_probabilities, item_information
from .irt.scoring import score_person

START_RULES = ("max_info_at_zero", "fixed_item")
ESTIMATORS = ("EAP", "ML")
TERMINATIONS = ("sem_met", "pool_exhausted", "max_items")


@dataclass(frozen=True)
class CatConfig:
    min_sem: float = 0.4
    max_items: int = 9999
    theta_estimator: str = "EAP"
    selection: str = "MI"
    start_rule: str = "max_info_at_zero"
    start_item: int | None = None

    def __post_init__(self) -> None:
        if not self.min_sem > 0:
            raise ValueError("min_sem must be positive")
        if self.max_items < 1:
            raise ValueError("max_items must be at least 1")
        if self.selection != "MI":
            raise ValueError("only maximum-information selection is supported")
        if self.theta_estimator not in ESTIMATORS:
            raise ValueError(f"theta_estimator must be one of {ESTIMATORS}")
        if self.start_rule not in START_RULES:
            raise ValueError(f"start_rule must be one of {START_RULES}")
        if self.start_rule == "fixed_item" and self.start_item is None:
            raise ValueError("fixed_item start rule needs start_item")

    def to_dict(self) -> dict:
        return {
            "min_sem": self.min_sem,
            "max_items": self.max_items,
            "theta_estimator": self.theta_estimator,
            "selection": self.selection,
            "start_rule": self.start_rule,
            "start_item": self.start_item,
        }


@dataclass(frozen=True)
class CatStep:
    item: int
    item_name: str
    response: int
    theta: float
    se: float | None

    def to_dict(self) -> dict:
        return {
            "item": self.item,
            "item_name": self.item_name,
            "response": self.response,
            "theta": self.theta,
            "se": self.se,
        }


@dataclass(frozen=True)
class CatTrajectory:
    steps: tuple[CatStep, ...]
    final_theta: float
    final_se: float | None
    termination: str

    def __post_init__(self) -> None:
        items = [s.item for s in self.steps]
        if len(set(items)) != len(items):
            raise ValueError("an item was administered twice")
        if self.termination not in TERMINATIONS:
            raise ValueError(f"termination must be one of {TERMINATIONS}")

    @property
    def n_items(self) -> int:
        return len(self.steps)

    def to_dict(self) -> dict:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "final_theta": self.final_theta,
            "final_se": self.final_se,
            "termination": self.termination,
        }


def generate_pattern(model: IrtModel, true_theta: float, seed) -> np.ndarray:
    """Simulate one person's responses to every item at a fixed ability.

    ``seed`` is an integer or a numpy Generator; the same seed always
    produces the same pattern. Excluded items come back as NaN.
    """
    if not np.isfinite(true_theta):
        raise ValueError("true_theta must be finite")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pattern = np.full(model.n_items, np.nan)
    for i, params in enumerate(model.items):
        if params is None:
            continue
        p = category_probabilities(params, np.array([true_theta]))[0]
        pattern[i] = int(np.searchsorted(np.cumsum(p), rng.random(), side="right"))
    return np.minimum(pattern, [it.max_score if it else 0 for it in model.items])


def _eap_from_log_posterior(log_post: np.ndarray, nodes: np.ndarray) -> tuple[float, float]:
    w = np.exp(log_post - log_post.max())
    w /= w.sum()
    mean = float(w @ nodes)
    var = float(w @ nodes**2 - mean**2)
    return mean, float(np.sqrt(max(var, 0.0)))


def run_cat(model: IrtModel, pattern, config: CatConfig) -> CatTrajectory:
    """Replay ``pattern`` through the adaptive loop under ``config``.

    Selection ties break toward the lowest item index so replays are
    deterministic.
    """
    pattern = np.asarray(pattern, dtype=float)
    if pattern.shape != (model.n_items,):
        raise ValueError(f"pattern must cover all {model.n_items} items")
    pool = [i for i in model.active_items()]
    if not pool:
        raise ValueError("item pool is empty")
    missing = [model.item_names[i] for i in pool if not np.isfinite(pattern[i])]
    if missing:
        raise ValueError(f"pattern lacks responses for pool items: {', '.join(missing)}")

    nodes = model.quadrature.nodes
    log_post = np.log(model.quadrature.weights)
    prob_tables = {i: category_probabilities(model.items[i], nodes) for i in pool}

    administered: list[CatStep] = []
    available = list(pool)
    theta = 0.0
    se: float | None = None
    responses = np.full(model.n_items, np.nan)
    termination = None

    while True:
        if config.start_rule == "fixed_item" and not administered:
            if config.start_item not in available:
                raise ValueError(f"start_item {config.start_item} is not in the pool")
            chosen = config.start_item
        else:
            info = [item_information(model.items[i], theta) for i in available]
            chosen = available[int(np.argmax(info))]
        available.remove(chosen)
        response = int(round(pattern[chosen]))
        if not 0 <= response <= model.items[chosen].max_score:
            raise ValueError(
                f"response {response} out of range for item {model.item_names[chosen]!r}"
            )
        responses[chosen] = response

        if config.theta_estimator == "EAP":
            log_post = log_post + np.log(np.clip(prob_tables[chosen][:, response], 1e-300, None))
            theta, se = _eap_from_log_posterior(log_post, nodes)
        else:
            est = score_person(model, responses, method="ML")
            theta, se = est.theta, est.se

        administered.append(
            CatStep(
                item=chosen,
                item_name=model.item_names[chosen],
                response=response,
                theta=theta,
                se=se,
            )
        )
        if se is not None and se <= config.min_sem:
            termination = "sem_met"
        elif len(administered) >= config.max_items:
            termination = "max_items"
        elif not available:
            termination = "pool_exhausted"
        if termination:
            break

    return CatTrajectory(
        steps=tuple(administered),
        final_theta=theta,
        final_se=se,
        termination=termination,
    )


def trajectory_ci(traj: CatTrajectory, level: float = 0.95) -> list[tuple[float | None, float | None]]:
    """Per-step (lower, upper) confidence bounds, theta +/- z * se."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z = NormalDist().inv_cdf((1.0 + level) / 2.0)
    bounds: list[tuple[float | None, float | None]] = []
    for step in traj.steps:
        if step.se is None:
            bounds.append((None, None))
        else:
            bounds.append((step.theta - z * step.se, step.theta + z * step.se))
    return bounds


@dataclass(frozen=True)
class CatBatchRecord:
    simulee: int
    true_theta: float
    final_theta: float
    final_se: float | None
    n_items: int
    termination: str


def run_cat_batch(
    model: IrtModel, true_thetas, config: CatConfig, seed: int
) -> list[CatBatchRecord]:
    """Simulate one trajectory per ability value; one master seed drives all
    pattern draws."""
    rng = np.random.default_rng(seed)
    records = []
    for idx, true_theta in enumerate(np.asarray(true_thetas, dtype=float)):
        pattern = generate_pattern(model, float(true_theta), rng)
        traj = run_cat(model, pattern, config)
        records.append(
            CatBatchRecord(
                simulee=idx,
                true_theta=float(true_theta),
                final_theta=traj.final_theta,
                final_se=traj.final_se,
                n_items=traj.n_items,
                termination=traj.termination,
            )
        )
    return records
