"""Item response theory: models, MML-EM estimation, person scoring."""

from .estimation import EmConfig, EmFailure, fit_mml_em, simulate_responses
from .models import (
    IrtModel,
    ItemFamily,
    ItemParams,
    Quadrature,
    category_probabilities,
    item_information,
    load_model,
    model_from_dict,
    model_to_dict,
    normal_quadrature,
    prob_3pl,
    prob_gpcm,
    prob_nrm,
    save_model,
    standard_error,
    test_information,
)
from .scoring import AbilityEstimate, posterior_weights, score_matrix, score_person

__all__ = [
    "AbilityEstimate",
    "EmConfig",
    "EmFailure",
    "IrtModel",
    "ItemFamily",
    "ItemParams",
    "Quadrature",
    "category_probabilities",
    "fit_mml_em",
    "item_information",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "normal_quadrature",
    "posterior_weights",
    "prob_3pl",
    "prob_gpcm",
    "prob_nrm",
    "save_model",
    "score_matrix",
    "score_person",
    "simulate_responses",
    "standard_error",
    "test_information",
]
