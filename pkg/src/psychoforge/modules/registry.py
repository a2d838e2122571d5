"""Module discovery, category routing and invocation.

A module package is a directory containing a flagged ``PACKAGE.meta`` and a
``modules.yml`` manifest. Handlers named by manifest bindings are resolved
against an in-process handler table that implementations register into at
import time; a manifest whose bindings cannot be resolved is listed as
unavailable rather than dropped, so the problem stays visible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .manifest import ManifestError, parse_manifest_file, parse_package_meta

KNOWN_CATEGORIES = (
    "Scores",
    "Validity",
    "Reliability",
    "Item analysis",
    "Regression",
    "IRT models",
    "DIF/Fairness",
)
FALLBACK_CATEGORY = "Modules"

REQUIRED_FIELDS = ("title", "category", "binding.ui", "binding.server")

HANDLER_TABLE: dict[str, Callable] = {}


class NotFoundError(KeyError):
    """No module with the requested id is registered."""


class UnavailableError(RuntimeError):
    """The module is registered but cannot run; carries its diagnostic."""


def register_handler(name: str, fn: Callable | None = None):
    """Register a callable under a binding name (usable as a decorator)."""

    def _register(target: Callable) -> Callable:
        HANDLER_TABLE[name] = target
        return target

    return _register(fn) if fn is not None else _register


@dataclass(frozen=True)
class ModuleManifest:
    id: str
    package: str
    module: str
    title: str
    category: str
    ui_binding: str
    server_binding: str
    source_path: str


@dataclass(frozen=True)
class ModuleEntry:
    manifest: ModuleManifest
    routed_category: str
    available: bool
    diagnostic: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.manifest.id,
            "title": self.manifest.title,
            "category": self.routed_category,
            "declared_category": self.manifest.category,
            "available": self.available,
            "diagnostic": self.diagnostic,
        }


@dataclass(frozen=True)
class Registry:
    modules: dict[str, ModuleEntry]
    roots: tuple[str, ...]
    diagnostics: tuple[str, ...]

    def get(self, module_id: str) -> ModuleEntry:
        try:
            return self.modules[module_id]
        except KeyError:
            raise NotFoundError(f"no module with id {module_id!r}") from None

    def by_category(self) -> dict[str, list[ModuleEntry]]:
        grouped: dict[str, list[ModuleEntry]] = {}
        for entry in self.modules.values():
            grouped.setdefault(entry.routed_category, []).append(entry)
        return grouped

    def __len__(self) -> int:
        return len(self.modules)


def route_category(manifest: ModuleManifest) -> str:
    return manifest.category if manifest.category in KNOWN_CATEGORIES else FALLBACK_CATEGORY


def _validate_entry(package: str, name: str, raw: dict, source: str) -> ModuleEntry:
    module_id = f"{package}_{name}"
    binding = raw.get("binding")
    if not isinstance(binding, dict):
        binding = {}
    manifest = ModuleManifest(
        id=module_id,
        package=package,
        module=name,
        title=str(raw.get("title", "") or ""),
        category=str(raw.get("category", "") or ""),
        ui_binding=str(binding.get("ui", "") or ""),
        server_binding=str(binding.get("server", "") or ""),
        source_path=source,
    )
    missing = []
    if not manifest.title:
        missing.append("title")
    if not manifest.category:
        missing.append("category")
    if not manifest.ui_binding:
        missing.append("binding.ui")
    if not manifest.server_binding:
        missing.append("binding.server")
    if missing:
        return ModuleEntry(
            manifest=manifest,
            routed_category=route_category(manifest) if manifest.category else FALLBACK_CATEGORY,
            available=False,
            diagnostic=f"manifest missing required field(s): {', '.join(missing)}",
        )
    unresolved = [
        b for b in (manifest.ui_binding, manifest.server_binding) if b not in HANDLER_TABLE
    ]
    if unresolved:
        return ModuleEntry(
            manifest=manifest,
            routed_category=route_category(manifest),
            available=False,
            diagnostic=f"unresolved handler(s): {', '.join(unresolved)}",
        )
    return ModuleEntry(manifest=manifest, routed_category=route_category(manifest), available=True)


def _scan_package(pkg_dir: Path, diagnostics: list[str]) -> list[ModuleEntry] | None:
    """Entries for one package directory; None when the manifest is corrupt."""
    meta_path = pkg_dir / "PACKAGE.meta"
    try:
        meta, flagged = parse_package_meta(meta_path)
    except OSError as exc:
        diagnostics.append(f"{meta_path}: unreadable ({exc})")
        return []
    if not flagged:
        return []
    package = meta.get("package", pkg_dir.name)
    manifest_path = pkg_dir / "modules.yml"
    if not manifest_path.is_file():
        diagnostics.append(f"{pkg_dir}: flagged as a module package but has no modules.yml")
        return []
    try:
        raw_modules = parse_manifest_file(manifest_path)
    except ManifestError as exc:
        diagnostics.append(str(exc))
        return None
    return [
        _validate_entry(package, name, raw, str(manifest_path))
        for name, raw in raw_modules.items()
    ]


def discover(roots) -> Registry:
    """Build a registry from the package directories under ``roots``.

    Scan order is deterministic: roots in the given order, package
    directories sorted by name. The registry itself is keyed and ordered
    by module id. Duplicate ids keep the first occurrence in scan order.
    """
    diagnostics: list[str] = []
    entries: dict[str, ModuleEntry] = {}
    kept_roots: list[str] = []
    for root in roots:
        root_path = Path(root)
        kept_roots.append(str(root))
        if not root_path.is_dir():
            diagnostics.append(f"root {root} does not exist; skipped")
            warnings.warn(f"module root {root} does not exist", stacklevel=2)
            continue
        for pkg_dir in sorted(p for p in root_path.iterdir() if p.is_dir()):
            if not (pkg_dir / "PACKAGE.meta").is_file():
                continue
            scanned = _scan_package(pkg_dir, diagnostics)
            if scanned is None:
                continue
            for entry in scanned:
                if entry.manifest.id in entries:
                    diagnostics.append(
                        f"duplicate module id {entry.manifest.id!r} from "
                        f"{entry.manifest.source_path}; entry rejected"
                    )
                    continue
                entries[entry.manifest.id] = entry
    ordered = dict(sorted(entries.items()))
    return Registry(modules=ordered, roots=tuple(kept_roots), diagnostics=tuple(diagnostics))


def rediscover(registry: Registry) -> Registry:
    """Re-run discovery over the same roots.

    New manifests appear, removed ones drop out. A package whose manifest
    has become corrupt keeps its previous entries so a bad edit never
    knocks out a running module.
    """
    diagnostics: list[str] = []
    entries: dict[str, ModuleEntry] = {}
    for root in registry.roots:
        root_path = Path(root)
        if not root_path.is_dir():
            diagnostics.append(f"root {root} does not exist; skipped")
            continue
        for pkg_dir in sorted(p for p in root_path.iterdir() if p.is_dir()):
            if not (pkg_dir / "PACKAGE.meta").is_file():
                continue
            scanned = _scan_package(pkg_dir, diagnostics)
            if scanned is None:
                previous = [
                    e
                    for e in registry.modules.values()
                    if Path(e.manifest.source_path).parent == pkg_dir
                ]
                diagnostics.append(
                    f"{pkg_dir / 'modules.yml'}: corrupt; keeping "
                    f"{len(previous)} previously discovered entr"
                    f"{'y' if len(previous) == 1 else 'ies'}"
                )
                scanned = previous
            for entry in scanned:
                if entry.manifest.id in entries:
                    diagnostics.append(
                        f"duplicate module id {entry.manifest.id!r} from "
                        f"{entry.manifest.source_path}; entry rejected"
                    )
                    continue
                entries[entry.manifest.id] = entry
    ordered = dict(sorted(entries.items()))
    return Registry(modules=ordered, roots=registry.roots, diagnostics=tuple(diagnostics))


def error_document(module_id: str, message: str) -> dict:
    return {
        "module": module_id,
        "panels": [{"kind": "error", "title": "Module error", "message": message}],
    }


def invoke(registry: Registry, module_id: str, context, request: dict | None = None) -> dict:
    """Run a module's server handler against the host context.

    Handler exceptions come back as an error panel in the output document;
    they are the module's problem, not the host's.
    """
    entry = registry.get(module_id)
    if not entry.available:
        raise UnavailableError(f"module {module_id!r} is unavailable: {entry.diagnostic}")
    handler = HANDLER_TABLE[entry.manifest.server_binding]
    try:
        document = handler(module_id, context, dict(request or {}))
    except Exception as exc:  # noqa: BLE001 - module faults become error panels
        return error_document(module_id, f"{type(exc).__name__}: {exc}")
    if not isinstance(document, dict) or "panels" not in document:
        return error_document(module_id, "handler returned no panels")
    document.setdefault("module", module_id)
    return document


def describe_ui(registry: Registry, module_id: str, context) -> dict:
    """Run a module's ui handler: a declarative form document for clients."""
    entry = registry.get(module_id)
    if not entry.available:
        raise UnavailableError(f"module {module_id!r} is unavailable: {entry.diagnostic}")
    handler = HANDLER_TABLE[entry.manifest.ui_binding]
    try:
        return handler(module_id, context)
    except Exception as exc:  # noqa: BLE001
        return error_document(module_id, f"{type(exc).__name__}: {exc}")
