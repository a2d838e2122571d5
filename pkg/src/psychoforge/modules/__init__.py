"""Add-on module discovery, host resource brokering and invocation."""

from pathlib import Path

from .host import RESOURCE_NAMES, Absence, HostContext
from .manifest import (
    MODULE_FLAG_LINE,
    ManifestError,
    parse_manifest_file,
    parse_manifest_text,
    parse_package_meta,
)
from .registry import (
    FALLBACK_CATEGORY,
    HANDLER_TABLE,
    KNOWN_CATEGORIES,
    ModuleEntry,
    ModuleManifest,
    NotFoundError,
    Registry,
    UnavailableError,
    describe_ui,
    discover,
    error_document,
    invoke,
    rediscover,
    register_handler,
    route_category,
)

BUNDLED_ROOT = str(Path(__file__).resolve().parent / "bundled")


def default_registry(extra_roots=()) -> Registry:
    """Registry over the bundled modules plus any extra roots."""
    from . import builtin  # noqa: F401 - handler registration side effect

    return discover([BUNDLED_ROOT, *extra_roots])


__all__ = [
    "Absence",
    "BUNDLED_ROOT",
    "FALLBACK_CATEGORY",
    "HANDLER_TABLE",
    "HostContext",
    "KNOWN_CATEGORIES",
    "MODULE_FLAG_LINE",
    "ManifestError",
    "ModuleEntry",
    "ModuleManifest",
    "NotFoundError",
    "RESOURCE_NAMES",
    "Registry",
    "UnavailableError",
    "default_registry",
    "describe_ui",
    "discover",
    "error_document",
    "invoke",
    "parse_manifest_file",
    "parse_manifest_text",
    "parse_package_meta",
    "rediscover",
    "register_handler",
    "route_category",
]
