"""Differential item functioning via logistic regression.

The full model adds a group main effect and a group-by-ability interaction
to the logistic ICC:

    P(y=1) = 1 / (1 + exp(-(b0 + b1*theta + b2*G + b3*G*theta)))

Group effects are tested with likelihood-ratio tests against the nested
submodel. Matching on an external observed score (instead of the test's
own total) turns the same machinery into a change-score scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import ScoredMatrix, TotalScore, total_scores
from .regression import DegenerateOutcomeError, SeparationError, irls

DIF_TESTS = ("both", "uniform_only", "nonuniform_only")
MATCHING_SOURCES = ("total", "standardized_total", "external")
DEFAULT_ALPHA = 0.05


class GroupError(ValueError):
    """Group vector unusable: missing, constant, or not coded 0/1."""


class LrtError(RuntimeError):
    """A nested-model fit failed, so the likelihood-ratio test is undefined."""

    def __init__(self, message: str, cause: Exception | None = None):
        super().__init__(message)
        self.cause = cause


@dataclass(frozen=True)
class DifFit:
    beta: np.ndarray
    vcov: np.ndarray
    loglik: float
    converged: bool

    def __post_init__(self) -> None:
        beta = np.asarray(self.beta, dtype=float)
        vcov = np.asarray(self.vcov, dtype=float)
        beta.setflags(write=False)
        vcov.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "vcov", vcov)


@dataclass(frozen=True)
class DifResult:
    item: str
    beta: tuple[float, float, float, float] | None
    vcov: np.ndarray | None
    lrt_stat: float | None
    df: int | None
    p_value: float | None
    dif_type: str | None
    test: str
    matching_source: str
    error: str | None = None

    @property
    def flagged(self) -> bool:
        return self.dif_type not in (None, "none")

    def to_dict(self) -> dict:
        return {
            "item": self.item,
            "beta": None if self.beta is None else list(self.beta),
            "lrt_stat": self.lrt_stat,
            "df": self.df,
            "p_value": self.p_value,
            "dif_type": self.dif_type,
            "test": self.test,
            "matching_source": self.matching_source,
            "error": self.error,
        }


@dataclass(frozen=True)
class DifScan:
    results: tuple[DifResult, ...]
    alpha: float
    matching_source: str
    counts: dict[str, int]
    bh_flags: tuple[bool, ...] | None = None


def _complete_triples(y, theta, g):
    y = np.asarray(y, dtype=float)
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g, dtype=float)
    if not (len(y) == len(theta) == len(g)):
        raise ValueError("y, theta and g must have equal length")
    keep = np.isfinite(y) & np.isfinite(theta) & np.isfinite(g)
    y, theta, g = y[keep], theta[keep], g[keep]
    if len(y) < 5:
        raise ValueError("need at least 5 complete (y, theta, g) triples")
    levels = np.unique(g)
    if not np.all(np.isin(levels, (0.0, 1.0))):
        raise GroupError("group must be coded 0/1")
    if len(levels) < 2:
        raise GroupError("both groups must be present")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("y must be binary")
    if len(np.unique(y)) < 2:
        raise DegenerateOutcomeError("y must contain both 0 and 1")
    return y, theta, g


def _design(theta: np.ndarray, g: np.ndarray, terms: str) -> np.ndarray:
    cols = [np.ones_like(theta), theta]
    if "g" in terms:
        cols.append(g)
    if "i" in terms:
        cols.append(g * theta)
    return np.column_stack(cols)


def fit_dif_logistic(y, theta, g) -> DifFit:
    """Fit the four-parameter group-interaction logistic model."""
    y, theta, g = _complete_triples(y, theta, g)
    beta, vcov, loglik, converged, _ = irls(_design(theta, g, "gi"), y)
    return DifFit(beta=beta, vcov=vcov, loglik=loglik, converged=converged)


def _fit_terms(y, theta, g, terms):
    return irls(_design(theta, g, terms), y)


def _pad_beta(beta: np.ndarray, terms: str) -> tuple[float, float, float, float]:
    full = [beta[0], beta[1], 0.0, 0.0]
    if "g" in terms:
        full[2] = beta[2]
    if "i" in terms:
        full[3] = beta[3]
    return tuple(float(v) for v in full)


def _pad_vcov(vcov: np.ndarray, terms: str) -> np.ndarray:
    idx = [0, 1]
    if "g" in terms:
        idx.append(2)
    if "i" in terms:
        idx.append(3)
    out = np.zeros((4, 4))
    for r, ri in enumerate(idx):
        for c, ci in enumerate(idx):
            out[ri, ci] = vcov[r, c]
    return out


def dif_test(
    y,
    theta,
    g,
    test: str = "both",
    *,
    alpha: float = DEFAULT_ALPHA,
    matching_source: str = "standardized_total",
    item: str = "item",
) -> DifResult:
    """Likelihood-ratio test of group effects on one item.

    test="both" compares (1, theta, G, G*theta) against (1, theta), df=2;
    "uniform_only" adds only the group main effect, df=1;
    "nonuniform_only" tests the interaction on top of the main effect, df=1.
    dif_type reports the classification at ``alpha``: for a significant
    "both" test the interaction decides between uniform and nonuniform.
    """
    if test not in DIF_TESTS:
        raise ValueError(f"test must be one of {DIF_TESTS}")
    if matching_source not in MATCHING_SOURCES:
        raise ValueError(f"matching_source must be one of {MATCHING_SOURCES}")
    y, theta, g = _complete_triples(y, theta, g)

    full_terms, sub_terms, df = {
        "both": ("gi", "", 2),
        "uniform_only": ("g", "", 1),
        "nonuniform_only": ("gi", "g", 1),
    }[test]
    try:
        beta_f, vcov_f, ll_full, conv_f, _ = _fit_terms(y, theta, g, full_terms)
        _, _, ll_sub, conv_s, _ = _fit_terms(y, theta, g, sub_terms)
    except (SeparationError, np.linalg.LinAlgError) as exc:
        raise LrtError(f"model fit failed: {exc}", cause=exc) from exc
    if not (conv_f and conv_s):
        raise LrtError("model fit did not converge")

    stat = 2.0 * (ll_full - ll_sub)
    if stat < -1e-8:
        raise LrtError(f"nested log-likelihood ordering violated (stat={stat:.3g})")
    stat = max(stat, 0.0)
    p_value = float(stats.chi2.sf(stat, df))

    if p_value >= alpha:
        dif_type = "none"
    elif test == "uniform_only":
        dif_type = "uniform"
    elif test == "nonuniform_only":
        dif_type = "nonuniform"
    else:
        follow = dif_test(
            y, theta, g, "nonuniform_only", alpha=alpha, matching_source=matching_source
        )
        dif_type = "nonuniform" if follow.p_value < alpha else "uniform"

    return DifResult(
        item=item,
        beta=_pad_beta(beta_f, full_terms),
        vcov=_pad_vcov(vcov_f, full_terms),
        lrt_stat=float(stat),
        df=df,
        p_value=p_value,
        dif_type=dif_type,
        test=test,
        matching_source=matching_source,
    )


def benjamini_hochberg(p_values, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Step-up false-discovery-rate flags; NaN entries are never flagged."""
    p = np.asarray(p_values, dtype=float)
    flags = np.zeros(len(p), dtype=bool)
    valid = np.flatnonzero(np.isfinite(p))
    if len(valid) == 0:
        return flags
    order = valid[np.argsort(p[valid])]
    m = len(order)
    below = p[order] <= alpha * (np.arange(1, m + 1) / m)
    if np.any(below):
        cutoff = np.max(np.flatnonzero(below))
        flags[order[: cutoff + 1]] = True
    return flags


def _matching_values(scored: ScoredMatrix, matching_source: str, external) -> np.ndarray:
    if matching_source == "external":
        if external is None:
            raise ValueError("external matching requested but no values supplied")
        values = np.asarray(external, dtype=float)
        finite = values[np.isfinite(values)]
        if finite.size == 0 or np.all(finite == finite[0]):
            raise ValueError("matching criterion is constant or empty")
        return values
    totals: TotalScore = total_scores(scored)
    if totals.degenerate:
        raise ValueError("total scores are constant; matching criterion unusable")
    return totals.values if matching_source == "total" else totals.standardized


def dif_scan(
    scored: ScoredMatrix,
    g,
    *,
    matching_source: str = "standardized_total",
    external=None,
    test: str = "both",
    alpha: float = DEFAULT_ALPHA,
    bh: bool = False,
) -> DifScan:
    """Run dif_test across all binary items of a scored matrix.

    Per-item failures become flagged entries with ``error`` set; the scan
    itself always completes.
    """
    if matching_source not in MATCHING_SOURCES:
        raise ValueError(f"matching_source must be one of {MATCHING_SOURCES}")
    theta = _matching_values(scored, matching_source, external)
    g = np.asarray(g, dtype=float)
    results: list[DifResult] = []
    for i, name in enumerate(scored.item_names):
        if scored.max_scores[i] != 1:
            results.append(
                DifResult(
                    item=name,
                    beta=None,
                    vcov=None,
                    lrt_stat=None,
                    df=None,
                    p_value=None,
                    dif_type=None,
                    test=test,
                    matching_source=matching_source,
                    error="requires a binary item",
                )
            )
            continue
        try:
            results.append(
                dif_test(
                    scored.scores[:, i],
                    theta,
                    g,
                    test,
                    alpha=alpha,
                    matching_source=matching_source,
                    item=name,
                )
            )
        except (GroupError, DegenerateOutcomeError, LrtError, ValueError) as exc:
            results.append(
                DifResult(
                    item=name,
                    beta=None,
                    vcov=None,
                    lrt_stat=None,
                    df=None,
                    p_value=None,
                    dif_type=None,
                    test=test,
                    matching_source=matching_source,
                    error=str(exc),
                )
            )
    counts = {"none": 0, "uniform": 0, "nonuniform": 0, "error": 0}
    for res in results:
        counts["error" if res.error is not None else res.dif_type] += 1
    bh_flags = None
    if bh:
        p = np.array([np.nan if r.p_value is None else r.p_value for r in results])
        bh_flags = tuple(bool(f) for f in benjamini_hochberg(p, alpha))
    return DifScan(
        results=tuple(results),
        alpha=alpha,
        matching_source=matching_source,
        counts=counts,
        bh_flags=bh_flags,
    )


def dif_c_scan(
    scored: ScoredMatrix,
    matching,
    g,
    *,
    test: str = "both",
    alpha: float = DEFAULT_ALPHA,
    bh: bool = False,
) -> DifScan:
    """Scan with an external observed score (e.g. a pre-test total) as the
    matching criterion."""
    return dif_scan(
        scored,
        g,
        matching_source="external",
        external=matching,
        test=test,
        alpha=alpha,
        bh=bh,
    )


def dif_icc_pair(result: DifResult, theta_grid) -> tuple[np.ndarray, np.ndarray]:
    """Reference (G=0) and focal (G=1) response curves from a fitted result."""
    if result.beta is None:
        raise ValueError(f"result for {result.item!r} carries no fit: {result.error}")
    grid = np.asarray(theta_grid, dtype=float)
    b0, b1, b2, b3 = result.beta
    ref = 1.0 / (1.0 + np.exp(-(b0 + b1 * grid)))
    focal = 1.0 / (1.0 + np.exp(-((b0 + b2) + (b1 + b3) * grid)))
    return ref, focal
