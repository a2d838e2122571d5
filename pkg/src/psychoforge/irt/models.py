"""Item response models: 2PL/3PL, generalized partial credit, nominal response.

Category probabilities, Fisher information and the versioned JSON model
format live here; estimation is in :mod:`psychoforge.irt.estimation`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

MODEL_FORMAT = "psychoforge-irt-model"
MODEL_VERSION = 1


class ItemFamily(str, Enum):
    TWO_PL = "2PL"
    THREE_PL = "3PL"
    GPCM = "GPCM"
    NRM = "NRM"


BINARY_FAMILIES = (ItemFamily.TWO_PL, ItemFamily.THREE_PL)


@dataclass(frozen=True)
class ItemParams:
    """Parameters of one item.

    2PL/3PL: scalar discrimination ``a``, difficulty ``b``, lower asymptote
    ``c`` (0 for 2PL). GPCM: scalar ``a`` and per-category difficulties
    ``b[k]``, k = 1..K. NRM: per-category slopes ``a[k]`` and difficulties
    ``b[k]`` against the implicit baseline category 0.
    """

    family: ItemFamily
    a: float | np.ndarray
    b: float | np.ndarray
    c: float = 0.0

    def __post_init__(self) -> None:
        family = ItemFamily(self.family)
        object.__setattr__(self, "family", family)
        if family in BINARY_FAMILIES:
            a, b = float(self.a), float(self.b)
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
            if family is ItemFamily.TWO_PL and self.c != 0.0:
                raise ValueError("2PL items have c = 0")
            if not 0.0 <= self.c < 1.0:
                raise ValueError("c must lie in [0, 1)")
        else:
            b = np.atleast_1d(np.asarray(self.b, dtype=float))
            b.setflags(write=False)
            object.__setattr__(self, "b", b)
            if family is ItemFamily.NRM:
                a = np.atleast_1d(np.asarray(self.a, dtype=float))
                a.setflags(write=False)
                object.__setattr__(self, "a", a)
                if len(a) != len(b):
                    raise ValueError("NRM needs one slope per non-baseline category")
            else:
                object.__setattr__(self, "a", float(self.a))
            if self.c != 0.0:
                raise ValueError("polytomous families have no lower asymptote")

    @property
    def n_categories(self) -> int:
        if self.family in BINARY_FAMILIES:
            return 2
        return len(self.b) + 1

    @property
    def max_score(self) -> int:
        return self.n_categories - 1


def prob_3pl(params: ItemParams, theta) -> float | np.ndarray:
    """Correct-response probability c + (1-c) / (1 + exp(-a(theta-b)))."""
    if params.family not in BINARY_FAMILIES:
        raise ValueError("prob_3pl applies to 2PL/3PL items")
    theta = np.asarray(theta, dtype=float)
    z = np.clip(params.a * (theta - params.b), -700, 700)
    p = params.c + (1.0 - params.c) / (1.0 + np.exp(-z))
    return float(p) if p.ndim == 0 else p


def _category_logits(params: ItemParams, theta: np.ndarray) -> np.ndarray:
    """Cumulative category logits s_k(theta), k = 0..K; s_0 = 0."""
    theta = np.atleast_1d(theta)
    k = params.max_score
    if params.family is ItemFamily.GPCM:
        steps = params.a * (theta[:, None] - params.b[None, :])
        s = np.cumsum(steps, axis=1)
    elif params.family is ItemFamily.NRM:
        s = params.a[None, :] * (theta[:, None] - params.b[None, :])
    else:
        raise ValueError("categorical logits apply to GPCM/NRM items")
    return np.concatenate([np.zeros((len(theta), 1)), s], axis=1)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    z = s - s.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def prob_gpcm(params: ItemParams, theta) -> np.ndarray:
    """Category probabilities of the partial-credit family.

    Adjacent-category logits are linear: log(pi_k / pi_{k-1}) =
    a(theta - b_k). Computed through log-sum-exp so extreme theta stays
    finite. Returns shape (K+1,) for scalar theta, else (len(theta), K+1).
    """
    if params.family is not ItemFamily.GPCM:
        raise ValueError("prob_gpcm applies to GPCM items")
    theta_arr = np.asarray(theta, dtype=float)
    p = _softmax_rows(_category_logits(params, theta_arr))
    return p[0] if theta_arr.ndim == 0 else p


def prob_nrm(params: ItemParams, theta) -> np.ndarray:
    """Category probabilities of the nominal model.

    log(pi_k / pi_0) = a_k (theta - b_k) against baseline category 0.
    """
    if params.family is not ItemFamily.NRM:
        raise ValueError("prob_nrm applies to NRM items")
    theta_arr = np.asarray(theta, dtype=float)
    p = _softmax_rows(_category_logits(params, theta_arr))
    return p[0] if theta_arr.ndim == 0 else p


def category_probabilities(params: ItemParams, theta: np.ndarray) -> np.ndarray:
    """(len(theta), K+1) table of category probabilities, any family."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if params.family in BINARY_FAMILIES:
        p = prob_3pl(params, theta)
        return np.column_stack([1.0 - p, p])
    return _softmax_rows(_category_logits(params, theta))


def category_slopes(params: ItemParams) -> np.ndarray:
    """d s_k / d theta per category; constant for GPCM/NRM."""
    if params.family is ItemFamily.GPCM:
        return params.a * np.arange(params.n_categories, dtype=float)
    if params.family is ItemFamily.NRM:
        return np.concatenate([[0.0], params.a])
    raise ValueError("category slopes apply to GPCM/NRM items")


def item_information(params: ItemParams, theta) -> float | np.ndarray:
    """Fisher information of one item at theta.

    3PL uses a^2 ((pi-c)/(1-c))^2 (1-pi)/pi; the categorical families use
    the variance of the score function, Var(ds/dtheta) under the category
    distribution.
    """
    theta_arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if params.family in BINARY_FAMILIES:
        p = prob_3pl(params, theta_arr)
        c = params.c
        info = params.a**2 * ((p - c) / (1.0 - c)) ** 2 * (1.0 - p) / p
    else:
        t = category_slopes(params)
        probs = category_probabilities(params, theta_arr)
        mean = probs @ t
        info = probs @ (t**2) - mean**2
    info = np.maximum(info, 0.0)
    return float(info[0]) if np.asarray(theta).ndim == 0 else info


@dataclass(frozen=True)
class Quadrature:
    """Latent-trait integration grid with prior weights summing to 1."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)


def normal_quadrature(n_nodes: int = 61, bounds: tuple[float, float] = (-6.0, 6.0)) -> Quadrature:
    """Equally spaced nodes with renormalized standard-normal weights."""
    nodes = np.linspace(bounds[0], bounds[1], n_nodes)
    w = np.exp(-0.5 * nodes**2)
    return Quadrature(nodes=nodes, weights=w / w.sum())


@dataclass(frozen=True)
class IrtModel:
    """A fitted (or constructed) set of item parameters plus the trait grid.

    ``items`` is aligned with ``item_names``; entries may be None when an
    item was excluded from estimation (see ``diagnostics``).
    """

    items: tuple[ItemParams | None, ...]
    quadrature: Quadrature
    item_names: tuple[str, ...]
    loglik: float = float("nan")
    em_cycles: int = 0
    converged: bool = True
    diagnostics: tuple[str, ...] = ()
    loglik_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_items(self) -> int:
        return len(self.items)

    def active_items(self) -> list[int]:
        return [i for i, it in enumerate(self.items) if it is not None]


def test_information(model: IrtModel, theta, subset=None) -> float | np.ndarray:
    """Sum of item informations over a subset (default: all fitted items)."""
    if subset is None:
        subset = model.active_items()
    subset = list(subset)
    if not subset:
        raise ValueError("subset must not be empty")
    total = None
    for i in subset:
        params = model.items[i]
        if params is None:
            raise ValueError(f"item {model.item_names[i]!r} has no parameters")
        info = item_information(params, theta)
        total = info if total is None else total + info
    return total


def standard_error(model: IrtModel, theta, subset=None) -> float | np.ndarray:
    """1 / sqrt(test information)."""
    info = test_information(model, theta, subset)
    return 1.0 / np.sqrt(info)


def _params_to_dict(params: ItemParams | None) -> dict | None:
    if params is None:
        return None
    entry: dict = {"family": params.family.value}
    if params.family in BINARY_FAMILIES:
        entry.update(a=params.a, b=params.b)
        if params.family is ItemFamily.THREE_PL:
            entry["c"] = params.c
    elif params.family is ItemFamily.GPCM:
        entry.update(a=params.a, b=list(params.b))
    else:
        entry.update(a=list(params.a), b=list(params.b))
    return entry


def model_to_dict(model: IrtModel) -> dict:
    """Serialize to the versioned interchange document."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "items": [
            {"name": name, "params": _params_to_dict(params)}
            for name, params in zip(model.item_names, model.items)
        ],
        "quadrature": {
            "nodes": list(model.quadrature.nodes),
            "weights": list(model.quadrature.weights),
        },
        "loglik": None if np.isnan(model.loglik) else model.loglik,
        "em_cycles": model.em_cycles,
        "converged": model.converged,
        "diagnostics": list(model.diagnostics),
    }


def model_from_dict(doc: dict) -> IrtModel:
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    items = []
    names = []
    for entry in doc["items"]:
        names.append(entry["name"])
        raw = entry.get("params")
        if raw is None:
            items.append(None)
            continue
        family = ItemFamily(raw["family"])
        items.append(ItemParams(family=family, a=raw["a"], b=raw["b"], c=raw.get("c", 0.0)))
    quad = Quadrature(
        nodes=np.asarray(doc["quadrature"]["nodes"], dtype=float),
        weights=np.asarray(doc["quadrature"]["weights"], dtype=float),
    )
    loglik = doc.get("loglik")
    return IrtModel(
        items=tuple(items),
        quadrature=quad,
        item_names=tuple(names),
        loglik=float("nan") if loglik is None else float(loglik),
        em_cycles=int(doc.get("em_cycles", 0)),
        converged=bool(doc.get("converged", True)),
        diagnostics=tuple(doc.get("diagnostics", ())),
    )


def save_model(model: IrtModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2), encoding="utf-8")


def load_model(path: str | Path) -> IrtModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
