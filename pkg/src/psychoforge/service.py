"""HTTP/JSON facade over the engine and module registry.

One process serves many sessions, keyed by the ``X-Session`` header
(``default`` when absent). Each session owns a host context and a fitted-
model cache; uploads and rediscovery are serialized writers while reads
run concurrently. Analysis responses are cached as serialized bytes so a
cache hit reproduces the earlier body exactly.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, Header, Query, Request, Response
from fastapi.responses import JSONResponse

from . import __version__
from .cat import CatConfig, generate_pattern, run_cat, trajectory_ci
from .classical import criterion_validity, cronbach_alpha, item_analysis
from .dataset import (
    EmptyDataError,
    InvalidDatasetError,
    LevelError,
    MissingKeyError,
    ParseError,
    ResponseDataset,
    encode_categories,
    load_csv,
    score,
    total_scores,
)
from .dif import DegenerateOutcomeError, GroupError, dif_scan
from .irt import EmConfig, ItemFamily, fit_mml_em, model_to_dict
from .modules import (
    BUNDLED_ROOT,
    Absence,
    HostContext,
    NotFoundError,
    UnavailableError,
    default_registry,
    describe_ui,
    invoke,
    rediscover,
)
from .modules.registry import FALLBACK_CATEGORY, KNOWN_CATEGORIES
from .regression import SeparationError, fit_3pl_regression, fit_logistic, icc_curve

DEFAULT_PORT = 8090
DEFAULT_FIT_TIMEOUT = 120.0
CURVE_GRID = np.linspace(-4.0, 4.0, 161)

_DATA_ERRORS = (ParseError, EmptyDataError, InvalidDatasetError, LevelError, MissingKeyError)


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class SessionState:
    context: HostContext = field(default_factory=HostContext)
    fit_cache: dict = field(default_factory=dict)
    body_cache: dict = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)


def _json_bytes(payload) -> bytes:
    return json.dumps(payload, separators=(",", ":"), allow_nan=False).encode()


def _json_response(payload, headers: dict | None = None) -> Response:
    return Response(content=_json_bytes(payload), media_type="application/json", headers=headers)


def _clean(value):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats to None."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _fingerprint(dataset: ResponseDataset) -> str:
    h = hashlib.sha256()
    for row in dataset.responses:
        for cell in row:
            h.update(b"\x00" if cell is None else str(cell).encode())
            h.update(b"\x1f")
        h.update(b"\x1e")
    h.update(repr((dataset.item_names, dataset.item_types, dataset.key, dataset.max_score)).encode())
    for vec in (dataset.group, dataset.criterion, dataset.matching):
        h.update(b"-" if vec is None else np.ascontiguousarray(vec).tobytes())
    return h.hexdigest()


def _require_dataset(session: SessionState) -> ResponseDataset:
    dataset = session.context.resource("dataset")
    if isinstance(dataset, Absence):
        raise ApiError(409, dataset.reason)
    return dataset


def _resolve_families(dataset: ResponseDataset, families: str) -> list[ItemFamily]:
    """Map the ``families`` parameter onto one family per item.

    ``auto`` fits binary items with 2PL, ordinal with GPCM and nominal
    with NRM. A single family name overrides the binary choice only. A
    comma-separated list of exactly one entry per item is fully explicit.
    """
    tokens = [t.strip() for t in families.split(",") if t.strip()]
    by_type = {"binary": ItemFamily.TWO_PL, "ordinal": ItemFamily.GPCM, "nominal": ItemFamily.NRM}
    if len(tokens) <= 1:
        token = tokens[0] if tokens else "auto"
        if token != "auto":
            try:
                by_type["binary"] = ItemFamily(token)
            except ValueError:
                raise ApiError(422, f"unknown family {token!r}") from None
            if by_type["binary"] not in (ItemFamily.TWO_PL, ItemFamily.THREE_PL):
                raise ApiError(422, f"family {token!r} cannot apply to binary items")
        return [by_type[t] for t in dataset.item_types]
    if len(tokens) != dataset.items:
        raise ApiError(422, f"families list has {len(tokens)} entries for {dataset.items} items")
    try:
        return [ItemFamily(t) for t in tokens]
    except ValueError as exc:
        raise ApiError(422, str(exc)) from None


def _analysis_matrix(dataset: ResponseDataset, families: list[ItemFamily]):
    """Scores suited to the requested families: nominal items keep their
    category codes under NRM/GPCM but collapse to keyed 0/1 under 2PL/3PL."""
    keyed = score(dataset)
    coded, levels = encode_categories(dataset)
    scores = coded.scores.copy()
    max_scores = list(coded.max_scores)
    for i, fam in enumerate(families):
        if dataset.item_types[i] == "nominal" and fam in (ItemFamily.TWO_PL, ItemFamily.THREE_PL):
            scores[:, i] = keyed.scores[:, i]
            max_scores[i] = 1
    from .dataset import ScoredMatrix

    matrix = ScoredMatrix(
        scores=scores,
        max_scores=tuple(max_scores),
        item_names=coded.item_names,
        unknown_code_warnings=coded.unknown_code_warnings,
    )
    return matrix, levels


def _fit_with_timeout(executor, timeout, matrix, families, config):
    future = executor.submit(fit_mml_em, matrix, families, config=config)
    try:
        return future.result(timeout=timeout)
    except concurrent.futures.TimeoutError:
        raise ApiError(504, f"model fit exceeded {timeout} s") from None


def _get_or_fit(app, session: SessionState, dataset: ResponseDataset, families_param: str,
                max_cycles: int, n_quad: int):
    families = _resolve_families(dataset, families_param)
    key = (_fingerprint(dataset), tuple(f.value for f in families), max_cycles, n_quad)
    with session.lock:
        hit = session.fit_cache.get(key)
    if hit is not None:
        return key, hit, True
    matrix, _ = _analysis_matrix(dataset, families)
    if max_cycles < 1 or n_quad < 3:
        raise ApiError(422, "max_cycles must be >= 1 and n_quad >= 3")
    config = EmConfig(max_cycles=max_cycles, n_quad=n_quad)
    try:
        model = _fit_with_timeout(app.state.executor, app.state.fit_timeout, matrix, families, config)
    except ValueError as exc:
        raise ApiError(422, str(exc)) from None
    with session.lock:
        model = session.fit_cache.setdefault(key, model)
    return key, model, False


def _registry_listing(registry) -> dict:
    grouped = registry.by_category()
    names = [c for c in (*KNOWN_CATEGORIES, FALLBACK_CATEGORY) if c in grouped]
    names += sorted(set(grouped) - set(names))
    return {
        "categories": [
            {"name": name, "modules": [e.to_dict() for e in grouped[name]]} for name in names
        ],
        "diagnostics": list(registry.diagnostics),
    }


def create_app(module_roots=None, fit_timeout: float | None = None) -> FastAPI:
    app = FastAPI(title="psychoforge", version=__version__)
    roots = list(module_roots if module_roots is not None else [])
    env_roots = os.environ.get("PSYCHOFORGE_MODULE_ROOTS", "")
    roots += [r for r in env_roots.split(os.pathsep) if r]
    app.state.registry = default_registry(roots)
    app.state.registry_lock = threading.Lock()
    app.state.sessions = {}
    app.state.sessions_lock = threading.Lock()
    app.state.fit_timeout = DEFAULT_FIT_TIMEOUT if fit_timeout is None else fit_timeout
    app.state.executor = concurrent.futures.ThreadPoolExecutor(max_workers=4)

    def session_for(name: str | None) -> SessionState:
        key = name or "default"
        with app.state.sessions_lock:
            if key not in app.state.sessions:
                app.state.sessions[key] = SessionState()
            return app.state.sessions[key]

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.message})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/datasets")
    async def upload_dataset(request: Request, x_session: str | None = Header(default=None)):
        session = session_for(x_session)
        body = await request.body()
        content_type = request.headers.get("content-type", "")
        data_text, meta_text = None, None
        if "application/json" in content_type:
            try:
                envelope = json.loads(body)
            except json.JSONDecodeError as exc:
                raise ApiError(400, f"invalid JSON body: {exc}") from None
            if not isinstance(envelope, dict) or "data_csv" not in envelope:
                raise ApiError(422, "JSON upload needs a 'data_csv' field")
            data_text = str(envelope["data_csv"])
            if envelope.get("metadata_csv") is not None:
                meta_text = str(envelope["metadata_csv"])
        else:
            data_text = body.decode("utf-8", errors="replace")
        if not data_text.strip():
            raise ApiError(400, "empty dataset body")
        try:
            with tempfile.TemporaryDirectory() as tmp:
                data_path = Path(tmp) / "data.csv"
                data_path.write_text(data_text, encoding="utf-8")
                meta_path = None
                if meta_text is not None:
                    meta_path = Path(tmp) / "metadata.csv"
                    meta_path.write_text(meta_text, encoding="utf-8")
                dataset = load_csv(data_path, metadata=meta_path)
        except _DATA_ERRORS as exc:
            raise ApiError(400, f"{type(exc).__name__}: {exc}") from None
        with session.lock:
            session.context.publish_dataset(dataset)
            session.fit_cache.clear()
            session.body_cache.clear()
        return _json_response(
            {
                "persons": dataset.persons,
                "items": dataset.items,
                "item_names": list(dataset.item_names),
                "item_types": list(dataset.item_types),
                "group_present": dataset.group is not None,
                "criterion_present": dataset.criterion is not None,
                "matching_present": dataset.matching is not None,
            }
        )

    @app.get("/analysis/classical")
    def analysis_classical(
        n_groups: int = Query(default=3, ge=2, le=10),
        x_session: str | None = Header(default=None),
    ):
        session = session_for(x_session)
        dataset = _require_dataset(session)
        scored = session.context.resource("scored")
        totals = session.context.resource("totals")
        if totals.degenerate:
            raise ApiError(409, "total scores are constant; classical indices undefined")
        stats = item_analysis(scored, totals, n_groups=n_groups)
        alpha = cronbach_alpha(scored)
        validity = None
        criterion = session.context.resource("criterion")
        if not isinstance(criterion, Absence):
            cv = criterion_validity(totals, criterion)
            validity = {"r": cv.r, "p_value": cv.p_value, "n": cv.n}
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
            "alpha": alpha,
            "criterion_validity": validity,
            "config": {"n_groups": n_groups},
        }
        return _json_response(_clean(payload))

    @app.get("/analysis/regression/{item}")
    def analysis_regression(
        item: str,
        model: str = Query(default="logistic"),
        x_session: str | None = Header(default=None),
    ):
        session = session_for(x_session)
        _require_dataset(session)
        scored = session.context.resource("scored")
        totals = session.context.resource("totals")
        if item not in scored.item_names:
            raise ApiError(404, f"unknown item {item!r}")
        col = scored.item_names.index(item)
        if scored.max_scores[col] != 1:
            raise ApiError(422, f"item {item!r} is not binary; regression needs a binary item")
        if totals.degenerate:
            raise ApiError(409, "total scores are constant; no regressor available")
        y = scored.scores[:, col]
        theta = totals.standardized
        keep = ~np.isnan(y) & ~np.isnan(theta)
        try:
            if model == "logistic":
                fit = fit_logistic(y[keep], theta[keep])
                coef = {"beta0": fit.beta0, "beta1": fit.beta1}
                converged = fit.converged
            elif model == "3pl":
                fit = fit_3pl_regression(y[keep], theta[keep])
                coef = {"beta0": fit.beta0, "beta1": fit.beta1, "c": fit.c}
                converged = fit.converged
            else:
                raise ApiError(422, f"unknown regression model {model!r}")
        except (SeparationError, DegenerateOutcomeError) as exc:
            raise ApiError(409, f"{type(exc).__name__}: {exc}") from None
        curve = icc_curve(fit, CURVE_GRID)
        payload = {
            "item": item,
            "model": model,
            "coef": coef,
            "loglik": fit.loglik,
            "converged": bool(converged),
            "curve": {"theta": CURVE_GRID.tolist(), "p": curve.tolist()},
            "config": {"regressor": "standardized_total"},
        }
        return _json_response(_clean(payload))

    @app.get("/analysis/irt")
    def analysis_irt(
        families: str = Query(default="auto"),
        max_cycles: int = Query(default=500, ge=1),
        n_quad: int = Query(default=61, ge=3),
        x_session: str | None = Header(default=None),
    ):
        session = session_for(x_session)
        dataset = _require_dataset(session)
        key, model, hit = _get_or_fit(app, session, dataset, families, max_cycles, n_quad)
        cache_key = ("irt", key)
        with session.lock:
            body = session.body_cache.get(cache_key)
        if body is None:
            doc = model_to_dict(model)
            payload = {
                "model": doc,
                "summary": {
                    "loglik": model.loglik,
                    "em_cycles": model.em_cycles,
                    "converged": model.converged,
                    "diagnostics": list(model.diagnostics),
                },
                "config": {
                    "families": list(key[1]),
                    "max_cycles": max_cycles,
                    "n_quad": n_quad,
                },
            }
            body = _json_bytes(_clean(payload))
            with session.lock:
                session.body_cache[cache_key] = body
        return Response(
            content=body,
            media_type="application/json",
            headers={"X-Cache": "hit" if hit else "miss"},
        )

    @app.get("/analysis/dif")
    def analysis_dif(
        test: str = Query(default="both"),
        matching: str = Query(default="standardized"),
        alpha: float = Query(default=0.05, gt=0, lt=1),
        bh: bool = Query(default=False),
        x_session: str | None = Header(default=None),
    ):
        session = session_for(x_session)
        _require_dataset(session)
        if test not in ("both", "uniform_only", "nonuniform_only"):
            raise ApiError(422, f"unknown test {test!r}")
        source_map = {"total": "total", "standardized": "standardized_total", "external": "external"}
        if matching not in source_map:
            raise ApiError(422, f"unknown matching source {matching!r}")
        group = session.context.resource("group")
        if isinstance(group, Absence):
            raise ApiError(409, group.reason)
        external = None
        if matching == "external":
            ext = session.context.resource("matching")
            if isinstance(ext, Absence):
                raise ApiError(409, ext.reason)
            external = ext
        scored = session.context.resource("scored")
        try:
            scan = dif_scan(
                scored,
                group,
                matching_source=source_map[matching],
                external=external,
                test=test,
                alpha=alpha,
                bh=bh,
            )
        except (GroupError, ValueError) as exc:
            raise ApiError(409, str(exc)) from None
        payload = {
            "results": [r.to_dict() for r in scan.results],
            "counts": scan.counts,
            "alpha": scan.alpha,
            "matching": matching,
            "bh_flags": None if scan.bh_flags is None else list(scan.bh_flags),
            "config": {"test": test, "matching": matching, "alpha": alpha, "bh": bh},
        }
        return _json_response(_clean(payload))

    @app.get("/analysis/cat")
    def analysis_cat(
        true_theta: float = Query(default=0.0, ge=-6.0, le=6.0),
        min_sem: float = Query(default=0.4, gt=0),
        max_items: int | None = Query(default=None, ge=1),
        seed: int = Query(default=1),
        estimator: str = Query(default="EAP"),
        families: str = Query(default="auto"),
        max_cycles: int = Query(default=500, ge=1),
        n_quad: int = Query(default=61, ge=3),
        x_session: str | None = Header(default=None),
    ):
        session = session_for(x_session)
        dataset = _require_dataset(session)
        _, model, _ = _get_or_fit(app, session, dataset, families, max_cycles, n_quad)
        pool = len(model.active_items())
        if pool < 1:
            raise ApiError(409, "fitted model has no usable items")
        try:
            config = CatConfig(
                min_sem=min_sem,
                max_items=max_items if max_items is not None else pool,
                theta_estimator=estimator,
            )
            pattern = generate_pattern(model, true_theta, seed)
            traj = run_cat(model, pattern, config)
        except ValueError as exc:
            raise ApiError(422, str(exc)) from None
        payload = {
            "true_theta": true_theta,
            "seed": seed,
            "config": config.to_dict(),
            "trajectory": traj.to_dict(),
            "ci": [[lo, hi] for lo, hi in trajectory_ci(traj)],
        }
        return _json_response(_clean(payload))

    @app.get("/modules")
    def modules_list():
        return _json_response(_registry_listing(app.state.registry))

    @app.post("/modules/rediscover")
    def modules_rediscover():
        with app.state.registry_lock:
            app.state.registry = rediscover(app.state.registry)
        return _json_response(_registry_listing(app.state.registry))

    @app.get("/modules/{module_id}/ui")
    def module_ui(module_id: str, x_session: str | None = Header(default=None)):
        session = session_for(x_session)
        try:
            doc = describe_ui(app.state.registry, module_id, session.context)
        except NotFoundError as exc:
            raise ApiError(404, str(exc)) from None
        except UnavailableError as exc:
            raise ApiError(409, str(exc)) from None
        return _json_response(_clean(doc))

    @app.post("/modules/{module_id}/invoke")
    def module_invoke(
        module_id: str,
        request_body: dict = Body(default_factory=dict),
        x_session: str | None = Header(default=None),
    ):
        session = session_for(x_session)
        try:
            doc = invoke(app.state.registry, module_id, session.context, request_body)
        except NotFoundError as exc:
            raise ApiError(404, str(exc)) from None
        except UnavailableError as exc:
            raise ApiError(409, str(exc)) from None
        return _json_response(_clean(doc))

    return app


def main(port: int | None = None, module_roots=None) -> None:
    import uvicorn

    resolved = port if port is not None else int(os.environ.get("PSYCHOFORGE_PORT", DEFAULT_PORT))
    uvicorn.run(create_app(module_roots=module_roots), host="127.0.0.1", port=resolved)


if __name__ == "__main__":
    main()
