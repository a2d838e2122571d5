"""Host-side resource broker handed to module handlers.

Modules read host state through named, lazily computed resources. A
resource that cannot be produced (no dataset yet, no group column, model
fit failed) comes back as an :class:`Absence` carrying the reason, so a
module can report it instead of crashing the host.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ..dataset import InvalidDatasetError, ResponseDataset, score, total_scores
from ..irt import EmConfig, ItemFamily, fit_mml_em

RESOURCE_NAMES = (
    "dataset",
    "scored",
    "totals",
    "irt_binary_model",
    "group",
    "criterion",
    "matching",
)


@dataclass(frozen=True)
class Absence:
    """Typed stand-in for a resource the host cannot provide."""

    resource: str
    reason: str

    def __bool__(self) -> bool:
        return False


class HostContext:
    """Per-session resource cache with single-writer publish semantics.

    Reads are cheap after the first access; ``publish_dataset`` swaps the
    dataset and flushes every cached resource in one critical section.
    """

    def __init__(self, dataset: ResponseDataset | None = None, em_config: EmConfig | None = None):
        self._lock = threading.RLock()
        self._dataset = dataset
        self._em_config = em_config if em_config is not None else EmConfig(max_cycles=200)
        self._cache: dict[str, object] = {}
        self._counts: dict[str, int] = {name: 0 for name in RESOURCE_NAMES}

    def resource(self, name: str):
        if name not in RESOURCE_NAMES:
            raise KeyError(f"unknown host resource {name!r}")
        with self._lock:
            if name not in self._cache:
                self._counts[name] += 1
                self._cache[name] = getattr(self, f"_compute_{name}")()
            return self._cache[name]

    def compute_counts(self) -> dict[str, int]:
        """How many times each resource has actually been computed."""
        with self._lock:
            return dict(self._counts)

    def publish_dataset(self, dataset: ResponseDataset) -> dict:
        if not isinstance(dataset, ResponseDataset):
            raise InvalidDatasetError("publish_dataset expects a response dataset")
        dataset.validate()
        with self._lock:
            self._dataset = dataset
            self._cache.clear()
        return {"ok": True, "persons": dataset.persons, "items": dataset.items}

    # Resource computations run under the lock via resource(); each returns
    # either the value or an Absence explaining why there is none.

    def _compute_dataset(self):
        if self._dataset is None:
            return Absence("dataset", "no dataset has been published to this session")
        return self._dataset

    def _dependent(self, name: str, upstream: str):
        value = self.resource(upstream)
        if isinstance(value, Absence):
            return Absence(name, value.reason)
        return value

    def _compute_scored(self):
        dataset = self._dependent("scored", "dataset")
        if isinstance(dataset, Absence):
            return dataset
        return score(dataset)

    def _compute_totals(self):
        scored = self._dependent("totals", "scored")
        if isinstance(scored, Absence):
            return scored
        return total_scores(scored)

    def _compute_irt_binary_model(self):
        scored = self._dependent("irt_binary_model", "scored")
        if isinstance(scored, Absence):
            return scored
        binary = [i for i, k in enumerate(scored.max_scores) if k == 1]
        if len(binary) < 2:
            return Absence("irt_binary_model", "dataset has fewer than two binary items")
        sub = np.asarray(scored.scores, dtype=float)[:, binary]
        names = tuple(scored.item_names[i] for i in binary)
        try:
            return fit_mml_em(
                _BinaryView(sub, names),
                [ItemFamily.TWO_PL] * len(binary),
                config=self._em_config,
            )
        except Exception as exc:  # noqa: BLE001 - fit failure is an absence, not a crash
            return Absence("irt_binary_model", f"binary model fit failed: {exc}")

    def _person_vector(self, name: str):
        dataset = self._dependent(name, "dataset")
        if isinstance(dataset, Absence):
            return dataset
        value = getattr(dataset, name)
        if value is None:
            return Absence(name, f"dataset has no {name} column")
        return value

    def _compute_group(self):
        return self._person_vector("group")

    def _compute_criterion(self):
        return self._person_vector("criterion")

    def _compute_matching(self):
        return self._person_vector("matching")


@dataclass(frozen=True)
class _BinaryView:
    """Minimal scored-matrix shape for fitting a binary subset."""

    scores: np.ndarray
    item_names: tuple[str, ...]

    @property
    def max_scores(self) -> tuple[int, ...]:
        return (1,) * self.scores.shape[1]
