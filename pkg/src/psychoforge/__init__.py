"""Psychometric analysis engine: item statistics, IRT, DIF, CAT, plugins."""

from psychoforge.dataset import (
    ResponseDataset,
    ScoredMatrix,
    TotalScore,
    binarize_factor,
    encode_categories,
    load_csv,
    score,
    total_scores,
)

__version__ = "0.1.0"

__all__ = [
    "ResponseDataset",
    "ScoredMatrix",
    "TotalScore",
    "binarize_factor",
    "encode_categories",
    "load_csv",
    "score",
    "total_scores",
    "__version__",
]
