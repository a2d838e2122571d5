"""Traditional item statistics, distractor analysis, reliability and validity.

Statistics that are undefined on the given data (zero-variance item, constant
criterion) are reported as None rather than silently coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from psychoforge.dataset import ResponseDataset, ScoredMatrix, TotalScore


@dataclass(frozen=True)
class ItemStats:
    """Classical statistics of one item."""

    item: str
    difficulty: float
    rit: float | None
    rir: float | None
    uli: float | None
    n_valid: int


@dataclass(frozen=True)
class DistractorTable:
    """Per score-group proportions of each response option of one item.

    Rows are ability groups (lowest first), columns the item's codes plus a
    trailing missing category; each nonempty row sums to 1.
    """

    item: str
    codes: tuple[str, ...]
    proportions: np.ndarray
    group_sizes: tuple[int, ...]
    group_bounds: tuple[float, ...]
    key: str | None = None

    @property
    def n_groups(self) -> int:
        return self.proportions.shape[0]


@dataclass(frozen=True)
class CriterionValidity:
    """Pearson correlation of total score with an external criterion."""

    r: float | None
    p_value: float | None
    n: int


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Plain Pearson correlation; None if either side has no variance."""
    x = x - x.mean()
    y = y - y.mean()
    denom = np.sqrt((x * x).sum() * (y * y).sum())
    if denom == 0:
        return None
    return float((x * y).sum() / denom)


def score_groups(totals: np.ndarray, n_groups: int) -> list[np.ndarray]:
    """Partition person indices into ability groups by total score.

    Persons are stably sorted by (total, original index); group g takes the
    slice [floor(g*n/G), floor((g+1)*n/G)). Persons with missing totals are
    left out entirely.
    """
    if n_groups < 2:
        raise ValueError("need at least 2 groups")
    valid = np.flatnonzero(~np.isnan(totals))
    order = valid[np.argsort(totals[valid], kind="stable")]
    n = len(order)
    bounds = [(g * n) // n_groups for g in range(n_groups + 1)]
    return [order[bounds[g] : bounds[g + 1]] for g in range(n_groups)]


def item_analysis(scored: ScoredMatrix, totals: TotalScore, n_groups: int = 3) -> list[ItemStats]:
    """Difficulty, item-total/item-rest correlations and upper-lower index.

    difficulty is the scaled mean score (mean/max), rit the Pearson
    correlation with the total, rir with the total minus the item, and uli
    the difficulty difference between the top and bottom total-score groups.
    """
    n = scored.persons
    if not n >= n_groups:
        raise ValueError(f"need at least {n_groups} persons")
    groups = score_groups(totals.values, n_groups)
    lower, upper = groups[0], groups[-1]

    out = []
    for i in range(scored.items):
        item = scored.scores[:, i]
        k = scored.max_scores[i]
        valid = ~np.isnan(item) & ~np.isnan(totals.values)
        n_valid = int(valid.sum())
        if n_valid == 0:
            out.append(ItemStats(scored.item_names[i], float("nan"), None, None, None, 0))
            continue
        difficulty = float(item[valid].mean() / k)
        rit = _pearson(item[valid], totals.values[valid])
        rest = totals.values[valid] - item[valid]
        rir = _pearson(item[valid], rest)

        uli: float | None = None
        lo = lower[~np.isnan(item[lower])]
        hi = upper[~np.isnan(item[upper])]
        if len(lo) and len(hi):
            uli = float(item[hi].mean() / k - item[lo].mean() / k)
        out.append(ItemStats(scored.item_names[i], difficulty, rit, rir, uli, n_valid))
    return out


def distractor_analysis(
    dataset: ResponseDataset,
    totals: TotalScore,
    item: str,
    n_groups: int = 3,
) -> DistractorTable:
    """Proportion of each response option per total-score group.

    Only nominal and ordinal items carry option-level information; rows
    include a missing category so each nonempty row sums to 1.
    """
    i = dataset.item_index(item)
    if dataset.item_types[i] == "binary":
        raise ValueError(f"item {item!r} is binary; distractor analysis needs options")
    codes = dataset.observed_codes(i)
    groups = score_groups(totals.values, n_groups)

    proportions = np.zeros((n_groups, len(codes) + 1))
    sizes = []
    bounds = []
    for g, members in enumerate(groups):
        sizes.append(len(members))
        bounds.append(float(np.nanmin(totals.values[members])) if len(members) else float("nan"))
        if not len(members):
            continue
        for p in members:
            value = dataset.responses[p, i]
            if value is None:
                proportions[g, -1] += 1
            else:
                proportions[g, codes.index(str(value))] += 1
        proportions[g] /= len(members)
    return DistractorTable(
        item=item,
        codes=tuple(codes),
        proportions=proportions,
        group_sizes=tuple(sizes),
        group_bounds=tuple(bounds),
        key=dataset.key[i],
    )


def cronbach_alpha(scored: ScoredMatrix) -> float | None:
    """Internal-consistency alpha over complete-case persons.

    alpha = m/(m-1) * (1 - sum(item variances)/variance(total)), sample
    variances. None when the total has no variance.
    """
    if scored.items < 2:
        raise ValueError("alpha needs at least 2 items")
    complete = ~np.isnan(scored.scores).any(axis=1)
    data = scored.scores[complete]
    if data.shape[0] < 3:
        raise ValueError("alpha needs at least 3 complete-case persons")
    m = data.shape[1]
    total_var = data.sum(axis=1).var(ddof=1)
    if total_var == 0:
        return None
    item_var = data.var(axis=0, ddof=1).sum()
    return float(m / (m - 1) * (1.0 - item_var / total_var))


def criterion_validity(totals: TotalScore, criterion: np.ndarray) -> CriterionValidity:
    """Pearson r between totals and a criterion with a two-sided t-test."""
    criterion = np.asarray(criterion, dtype=float)
    valid = ~np.isnan(totals.values) & ~np.isnan(criterion)
    n = int(valid.sum())
    if n < 3:
        raise ValueError("need at least 3 complete pairs")
    r = _pearson(totals.values[valid], criterion[valid])
    if r is None:
        return CriterionValidity(r=None, p_value=None, n=n)
    df = n - 2
    if abs(r) >= 1.0:
        p = 0.0
    else:
        t = r * np.sqrt(df / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), df))
    return CriterionValidity(r=r, p_value=p, n=n)
