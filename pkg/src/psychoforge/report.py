"""Headless analysis runner and report renderer for the CLI.

``run_sections`` computes the requested analyses into JSON-ready
payloads plus the live objects figures need; ``write_report`` lays the
results down as per-section JSON files, PNG figures and one Markdown
report whose tables are fenced CSV blocks. Everything downstream of the
single seed is deterministic, so two runs with the same inputs produce
byte-identical artifacts.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .cat import CatConfig, generate_pattern, run_cat, trajectory_ci
from .classical import criterion_validity, cronbach_alpha, item_analysis
from .dataset import ResponseDataset, encode_categories, score, total_scores
from .dif import dif_icc_pair, dif_scan
from .irt import (
    ItemFamily,
    category_probabilities,
    fit_mml_em,
    model_to_dict,
    test_information,
)
from .regression import SeparationError, fit_3pl_regression, fit_logistic, icc_curve

SECTION_ORDER = ("classical", "regression", "irt", "dif", "cat")
THETA_GRID = np.linspace(-4.0, 4.0, 161)
FIG_DPI = 110


class DataError(ValueError):
    """Input data cannot support the requested section."""


class FitError(RuntimeError):
    """A model fit failed; the report cannot be completed."""


def _families_for(dataset: ResponseDataset) -> list[ItemFamily]:
    table = {"binary": ItemFamily.TWO_PL, "ordinal": ItemFamily.GPCM, "nominal": ItemFamily.NRM}
    return [table[t] for t in dataset.item_types]


def default_sections(dataset: ResponseDataset) -> list[str]:
    sections = ["classical", "regression", "irt", "cat"]
    if dataset.group is not None:
        sections.insert(3, "dif")
    return sections


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def run_sections(dataset: ResponseDataset, sections, seed: int = 1) -> dict:
    """Compute every requested section; returns {section: payload}.

    Payloads are JSON-clean dicts; figure-only objects ride along under
    the reserved key ``_live`` and never reach the JSON files.
    """
    unknown = sorted(set(sections) - set(SECTION_ORDER))
    if unknown:
        raise DataError(f"unknown section(s): {', '.join(unknown)}")
    ordered = [s for s in SECTION_ORDER if s in sections]
    scored = score(dataset)
    totals = total_scores(scored)
    results: dict[str, dict] = {}

    if "classical" in ordered:
        if totals.degenerate:
            raise DataError("total scores are constant; classical indices undefined")
        stats = item_analysis(scored, totals)
        payload = {
            "items": [
                {
                    "item": s.item,
                    "difficulty": s.difficulty,
                    "rit": s.rit,
                    "rir": s.rir,
                    "uli": s.uli,
                    "n_valid": s.n_valid,
                }
                for s in stats
            ],
            "alpha": cronbach_alpha(scored),
            "criterion_validity": None,
        }
        if dataset.criterion is not None:
            cv = criterion_validity(totals, dataset.criterion)
            payload["criterion_validity"] = {"r": cv.r, "p_value": cv.p_value, "n": cv.n}
        results["classical"] = _clean(payload)

    if "regression" in ordered:
        if totals.degenerate:
            raise DataError("total scores are constant; no regressor available")
        fits = []
        live = {}
        for i, name in enumerate(scored.item_names):
            if scored.max_scores[i] != 1:
                continue
            y = scored.scores[:, i]
            keep = ~np.isnan(y) & ~np.isnan(totals.standardized)
            entry = {"item": name}
            try:
                lf = fit_logistic(y[keep], totals.standardized[keep])
                gf = fit_3pl_regression(y[keep], totals.standardized[keep])
            except (SeparationError, ValueError) as exc:
                entry["error"] = f"{type(exc).__name__}: {exc}"
            else:
                entry["logistic"] = {
                    "beta0": lf.beta0,
                    "beta1": lf.beta1,
                    "loglik": lf.loglik,
                    "converged": lf.converged,
                }
                entry["guessing"] = {
                    "beta0": gf.beta0,
                    "beta1": gf.beta1,
                    "c": gf.c,
                    "loglik": gf.loglik,
                }
                entry["error"] = None
                live[name] = icc_curve(lf, THETA_GRID)
            fits.append(entry)
        if not fits:
            raise DataError("no binary items; regression section is empty")
        results["regression"] = _clean({"items": fits, "regressor": "standardized_total"})
        results["regression"]["_live"] = {"curves": live}

    model = None
    if "irt" in ordered or "cat" in ordered:
        families = _families_for(dataset)
        coded, _ = encode_categories(dataset)
        try:
            model = fit_mml_em(coded, families)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        except RuntimeError as exc:
            raise FitError(str(exc)) from None

    if "irt" in ordered:
        payload = {
            "model": model_to_dict(model),
            "summary": {
                "loglik": model.loglik,
                "em_cycles": model.em_cycles,
                "converged": model.converged,
                "diagnostics": list(model.diagnostics),
            },
        }
        results["irt"] = _clean(payload)
        results["irt"]["_live"] = {"model": model}

    if "dif" in ordered:
        if dataset.group is None:
            raise DataError("dif section needs a __group column")
        scan = dif_scan(scored, dataset.group)
        payload = {
            "results": [r.to_dict() for r in scan.results],
            "counts": scan.counts,
            "alpha": scan.alpha,
            "matching_source": scan.matching_source,
        }
        results["dif"] = _clean(payload)
        results["dif"]["_live"] = {"scan": scan}

    if "cat" in ordered:
        config = CatConfig(min_sem=0.4, max_items=len(model.active_items()))
        true_theta = 1.0
        pattern = generate_pattern(model, true_theta, seed)
        traj = run_cat(model, pattern, config)
        payload = {
            "true_theta": true_theta,
            "seed": seed,
            "config": config.to_dict(),
            "trajectory": traj.to_dict(),
            "ci": [[lo, hi] for lo, hi in trajectory_ci(traj)],
        }
        results["cat"] = _clean(payload)
        results["cat"]["_live"] = {"trajectory": traj}

    return results


def _csv_block(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    return f"```csv\n{buf.getvalue()}```\n"


def _round(value, digits=6):
    return None if value is None else round(value, digits)


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=FIG_DPI, metadata={"Software": None})
    plt.close(fig)


def _figure_classical(payload, path: Path) -> None:
    items = payload["items"]
    names = [row["item"] for row in items]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(6, 0.5 * len(names)), 4))
    ax.bar(x - 0.2, [row["difficulty"] or 0 for row in items], width=0.4, label="difficulty")
    ax.bar(x + 0.2, [row["rit"] or 0 for row in items], width=0.4, label="item-total r")
    ax.set_xticks(x, names, rotation=45, ha="right")
    ax.set_ylabel("value")
    ax.set_title("Item difficulty and discrimination")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def _figure_regression(live, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, curve in live["curves"].items():
        ax.plot(THETA_GRID, curve, label=name)
    ax.set_xlabel("standardized total score")
    ax.set_ylabel("P(correct)")
    ax.set_ylim(0, 1)
    ax.set_title("Logistic item characteristic curves")
    if len(live["curves"]) <= 12:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def _figure_irt(live, path: Path, info_path: Path) -> None:
    model = live["model"]
    fig, ax = plt.subplots(figsize=(6, 4))
    for idx, params in enumerate(model.items):
        if params is None:
            continue
        probs = category_probabilities(params, THETA_GRID)
        if params.n_categories == 2:
            ax.plot(THETA_GRID, probs[:, 1], label=model.item_names[idx])
        else:
            for k in range(probs.shape[1]):
                ax.plot(THETA_GRID, probs[:, k], linewidth=0.8)
    ax.set_xlabel("theta")
    ax.set_ylabel("category probability")
    ax.set_ylim(0, 1)
    ax.set_title("Fitted item response curves")
    fig.tight_layout()
    _save(fig, path)

    fig, ax = plt.subplots(figsize=(6, 4))
    info = test_information(model, THETA_GRID)
    ax.plot(THETA_GRID, info)
    ax.set_xlabel("theta")
    ax.set_ylabel("information")
    ax.set_title("Test information")
    fig.tight_layout()
    _save(fig, info_path)


def _figure_dif(live, path: Path) -> None:
    scan = live["scan"]
    flagged = [r for r in scan.results if r.flagged and r.error is None]
    target = flagged[0] if flagged else next((r for r in scan.results if r.error is None), None)
    fig, ax = plt.subplots(figsize=(6, 4))
    if target is not None:
        ref, focal = dif_icc_pair(target, THETA_GRID)
        ax.plot(THETA_GRID, ref, label="reference")
        ax.plot(THETA_GRID, focal, label="focal", linestyle="--")
        ax.set_title(f"Group curves for {target.item} ({target.dif_type})")
        ax.legend()
    else:
        ax.set_title("No testable items")
    ax.set_xlabel("matching score")
    ax.set_ylabel("P(correct)")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    _save(fig, path)


def _figure_cat(payload, path: Path) -> None:
    steps = payload["trajectory"]["steps"]
    x = np.arange(1, len(steps) + 1)
    theta = [s["theta"] for s in steps]
    lo = [pair[0] for pair in payload["ci"]]
    hi = [pair[1] for pair in payload["ci"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, theta, marker="o", label="estimate")
    if all(v is not None for v in lo + hi):
        ax.fill_between(x, lo, hi, alpha=0.2, label="95% CI")
    ax.axhline(payload["true_theta"], color="gray", linestyle=":", label="true ability")
    ax.set_xlabel("items administered")
    ax.set_ylabel("theta")
    ax.set_title("Adaptive test trajectory")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def _md_classical(payload, figures) -> str:
    rows = [
        [r["item"], _round(r["difficulty"]), _round(r["rit"]), _round(r["rir"]),
         _round(r["uli"]), r["n_valid"]]
        for r in payload["items"]
    ]
    parts = ["## Classical item analysis\n"]
    alpha = payload["alpha"]
    parts.append(
        f"Cronbach's alpha: {alpha:.4f}.\n" if alpha is not None else "Cronbach's alpha: undefined.\n"
    )
    if payload["criterion_validity"]:
        cv = payload["criterion_validity"]
        parts.append(
            f"Criterion validity: r = {cv['r']:.4f} (p = {cv['p_value']:.4g}, n = {cv['n']}).\n"
        )
    parts.append(_csv_block(["item", "difficulty", "rit", "rir", "uli", "n_valid"], rows))
    parts.append(f"![item overview]({figures['classical']})\n")
    return "\n".join(parts)


def _md_regression(payload, figures) -> str:
    rows = []
    for entry in payload["items"]:
        if entry.get("error"):
            rows.append([entry["item"], None, None, None, entry["error"]])
        else:
            rows.append(
                [
                    entry["item"],
                    _round(entry["logistic"]["beta0"]),
                    _round(entry["logistic"]["beta1"]),
                    _round(entry["guessing"]["c"]),
                    None,
                ]
            )
    parts = ["## Regression curves\n"]
    parts.append("Logistic and lower-asymptote fits against the standardized total score.\n")
    parts.append(_csv_block(["item", "beta0", "beta1", "guessing_c", "error"], rows))
    parts.append(f"![regression curves]({figures['regression']})\n")
    return "\n".join(parts)


def _md_irt(payload, figures) -> str:
    rows = []
    for item in payload["model"]["items"]:
        params = item["params"]
        if params is None:
            rows.append([item["name"], "excluded", None, None, None])
            continue
        a, b = params["a"], params["b"]
        rows.append(
            [
                item["name"],
                params["family"],
                json.dumps(_round_list(a)) if isinstance(a, list) else _round(a),
                json.dumps(_round_list(b)) if isinstance(b, list) else _round(b),
                _round(params.get("c")),
            ]
        )
    s = payload["summary"]
    parts = ["## IRT calibration\n"]
    parts.append(
        f"Marginal log-likelihood {s['loglik']:.4f} after {s['em_cycles']} EM cycles "
        f"({'converged' if s['converged'] else 'not converged'}).\n"
    )
    if s["diagnostics"]:
        parts.append("Diagnostics: " + "; ".join(s["diagnostics"]) + "\n")
    parts.append(_csv_block(["item", "family", "a", "b", "c"], rows))
    parts.append(f"![item curves]({figures['irt']})\n")
    parts.append(f"![test information]({figures['irt_information']})\n")
    return "\n".join(parts)


def _round_list(values, digits=6):
    return [None if v is None else round(v, digits) for v in values]


def _md_dif(payload, figures) -> str:
    rows = []
    for r in payload["results"]:
        rows.append(
            [r["item"], _round(r["lrt_stat"]), r["df"], _round(r["p_value"]),
             r["dif_type"], r["error"]]
        )
    counts = payload["counts"]
    parts = ["## DIF scan\n"]
    parts.append(
        f"Matching on {payload['matching_source']}; {counts['uniform']} uniform and "
        f"{counts['nonuniform']} nonuniform flags at alpha = {payload['alpha']}.\n"
    )
    parts.append(_csv_block(["item", "lrt_stat", "df", "p_value", "dif_type", "error"], rows))
    parts.append(f"![group curves]({figures['dif']})\n")
    return "\n".join(parts)


def _md_cat(payload, figures) -> str:
    traj = payload["trajectory"]
    rows = [
        [s["item_name"], s["response"], _round(s["theta"]), _round(s["se"])]
        for s in traj["steps"]
    ]
    parts = ["## Adaptive test simulation\n"]
    parts.append(
        f"Simulee at theta = {payload['true_theta']} (seed {payload['seed']}): "
        f"{len(traj['steps'])} items, final estimate {traj['final_theta']:.4f} "
        f"(se {traj['final_se']:.4f}), stopped by {traj['termination']}.\n"
    )
    parts.append(_csv_block(["item", "response", "theta", "se"], rows))
    parts.append(f"![trajectory]({figures['cat']})\n")
    return "\n".join(parts)


def write_report(dataset: ResponseDataset, results: dict, out_dir: str | Path) -> list[Path]:
    """Write per-section JSON, figures and report.md; returns paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    figures: dict[str, str] = {}

    for section, payload in results.items():
        live = payload.pop("_live", None)
        json_path = out / f"{section}.json"
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        written.append(json_path)
        if section == "classical":
            figures["classical"] = "classical_overview.png"
            _figure_classical(payload, out / figures["classical"])
            written.append(out / figures["classical"])
        elif section == "regression":
            figures["regression"] = "regression_icc.png"
            _figure_regression(live, out / figures["regression"])
            written.append(out / figures["regression"])
        elif section == "irt":
            figures["irt"] = "irt_curves.png"
            figures["irt_information"] = "irt_information.png"
            _figure_irt(live, out / figures["irt"], out / figures["irt_information"])
            written.append(out / figures["irt"])
            written.append(out / figures["irt_information"])
        elif section == "dif":
            figures["dif"] = "dif_curves.png"
            _figure_dif(live, out / figures["dif"])
            written.append(out / figures["dif"])
        elif section == "cat":
            figures["cat"] = "cat_trajectory.png"
            _figure_cat(payload, out / figures["cat"])
            written.append(out / figures["cat"])

    renderers = {
        "classical": _md_classical,
        "regression": _md_regression,
        "irt": _md_irt,
        "dif": _md_dif,
        "cat": _md_cat,
    }
    header = (
        "# Analysis report\n\n"
        f"Dataset: {dataset.persons} persons, {dataset.items} items "
        f"({', '.join(sorted(set(dataset.item_types)))}).\n"
    )
    body = [header]
    for section in SECTION_ORDER:
        if section in results:
            body.append(renderers[section](results[section], figures))
    report_path = out / "report.md"
    report_path.write_text("\n".join(body))
    written.append(report_path)
    return written
