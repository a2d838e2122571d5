"""Bundled modules: a simplified adaptive-testing demo and a DIF scan.

Both are ordinary registry entries wired through the same manifest files
and handler table as third-party modules, so they double as a living
reference for the module contract.
"""

from __future__ import annotations

import numpy as np

from ..cat import CatConfig, generate_pattern, run_cat, trajectory_ci
from ..dif import dif_c_scan, dif_scan
from ..irt import IrtModel, ItemFamily, ItemParams, normal_quadrature
from .host import Absence, HostContext
from .registry import error_document, register_handler

_EXAMPLE_SIZE = 20


def example_binary_model() -> IrtModel:
    """Fixed 20-item 2PL bank used when the host has no fitted model."""
    rng = np.random.default_rng(20240301)
    a = rng.uniform(0.9, 2.2, _EXAMPLE_SIZE)
    b = np.linspace(-2.5, 2.5, _EXAMPLE_SIZE)
    items = tuple(
        ItemParams(family=ItemFamily.TWO_PL, a=float(a[i]), b=float(b[i]))
        for i in range(_EXAMPLE_SIZE)
    )
    names = tuple(f"demo{i + 1:02d}" for i in range(_EXAMPLE_SIZE))
    return IrtModel(items=items, quadrature=normal_quadrature(), item_names=names)


def _resolve_model(context: HostContext, source: str) -> IrtModel | Absence:
    if source == "example":
        return example_binary_model()
    if source == "host":
        model = context.resource("irt_binary_model")
        if isinstance(model, Absence):
            return Absence("irt_binary_model", f"host model requested but {model.reason}")
        return model
    return Absence("model", f"unknown model source {source!r}; use 'example' or 'host'")


@register_handler("cat_example_ui")
def cat_example_ui(module_id: str, context: HostContext) -> dict:
    return {
        "module": module_id,
        "form": [
            {
                "control": "slider",
                "name": "true_theta",
                "label": "True ability",
                "min": -4.0,
                "max": 4.0,
                "step": 0.1,
                "default": 1.0,
            },
            {
                "control": "select",
                "name": "model",
                "label": "Item bank",
                "options": [
                    {"value": "example", "label": "Module's example bank"},
                    {"value": "host", "label": "Host-fitted binary model"},
                ],
                "default": "example",
            },
            {
                "control": "number",
                "name": "min_sem",
                "label": "Stop at standard error",
                "min": 0.05,
                "max": 2.0,
                "default": 0.4,
            },
            {"control": "number", "name": "seed", "label": "Seed", "default": 1},
        ],
    }


@register_handler("cat_example_server")
def cat_example_server(module_id: str, context: HostContext, request: dict) -> dict:
    theta = float(request.get("true_theta", 1.0))
    model = _resolve_model(context, str(request.get("model", "example")))
    if isinstance(model, Absence):
        return error_document(module_id, model.reason)
    config = CatConfig(
        min_sem=float(request.get("min_sem", 0.4)),
        max_items=int(request.get("max_items", _EXAMPLE_SIZE)),
    )
    pattern = generate_pattern(model, theta, int(request.get("seed", 1)))
    traj = run_cat(model, pattern, config)
    ci = trajectory_ci(traj)
    rows = [
        [step.item_name, int(step.response), round(step.theta, 4), round(step.se, 4)]
        for step in traj.steps
    ]
    return {
        "module": module_id,
        "panels": [
            {
                "kind": "text",
                "title": "Run summary",
                "body": (
                    f"Administered {traj.n_items} items; final ability estimate "
                    f"{traj.final_theta:.3f} (se {traj.final_se:.3f}); "
                    f"stopped because {traj.termination.replace('_', ' ')}."
                ),
            },
            {
                "kind": "curves",
                "title": "Ability trajectory",
                "x": list(range(1, traj.n_items + 1)),
                "series": [
                    {"name": "estimate", "y": [step.theta for step in traj.steps]},
                    {"name": "lower", "y": [lo for lo, _ in ci]},
                    {"name": "upper", "y": [hi for _, hi in ci]},
                    {"name": "true", "y": [theta] * traj.n_items},
                ],
            },
            {
                "kind": "table",
                "title": "Administered items",
                "columns": ["item", "response", "theta", "se"],
                "rows": rows,
            },
        ],
    }


@register_handler("dif_c_ui")
def dif_c_ui(module_id: str, context: HostContext) -> dict:
    return {
        "module": module_id,
        "form": [
            {
                "control": "select",
                "name": "test",
                "label": "DIF hypothesis",
                "options": [
                    {"value": "both", "label": "Uniform and nonuniform"},
                    {"value": "uniform_only", "label": "Uniform only"},
                    {"value": "nonuniform_only", "label": "Nonuniform only"},
                ],
                "default": "both",
            },
            {
                "control": "checkbox",
                "name": "bh",
                "label": "Benjamini-Hochberg correction",
                "default": False,
            },
        ],
    }


@register_handler("dif_c_server")
def dif_c_server(module_id: str, context: HostContext, request: dict) -> dict:
    scored = context.resource("scored")
    if isinstance(scored, Absence):
        return error_document(module_id, scored.reason)
    group = context.resource("group")
    if isinstance(group, Absence):
        return error_document(module_id, group.reason)
    test = str(request.get("test", "both"))
    bh = bool(request.get("bh", False))
    matching = context.resource("matching")
    if isinstance(matching, Absence):
        scan = dif_scan(scored, group, test=test, bh=bh)
    else:
        scan = dif_c_scan(scored, matching, group, test=test, bh=bh)
    rows = []
    for res in scan.results:
        if res.error is not None:
            rows.append([res.item, None, None, None, f"error: {res.error}"])
        else:
            rows.append(
                [
                    res.item,
                    round(res.lrt_stat, 4),
                    res.df,
                    round(res.p_value, 6),
                    res.dif_type,
                ]
            )
    counts = scan.counts
    return {
        "module": module_id,
        "panels": [
            {
                "kind": "text",
                "title": "Scan summary",
                "body": (
                    f"Matching on {scan.matching_source}; "
                    f"{counts['uniform'] + counts['nonuniform']} of "
                    f"{len(scan.results)} items flagged "
                    f"({counts['uniform']} uniform, {counts['nonuniform']} nonuniform, "
                    f"{counts['error']} not testable)."
                ),
            },
            {
                "kind": "table",
                "title": "Item-level tests",
                "columns": ["item", "statistic", "df", "p_value", "classification"],
                "rows": rows,
            },
        ],
    }
