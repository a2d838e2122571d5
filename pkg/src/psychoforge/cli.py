"""Command-line driver: headless reports, the HTTP service, module tools.

Exit codes: 0 success, 2 data error, 3 fit failure, 4 port in use,
5 invalid manifest.
"""

from __future__ import annotations

import os
import socket
import sys
from pathlib import Path

import click

from .dataset import (
    EmptyDataError,
    InvalidDatasetError,
    LevelError,
    MissingKeyError,
    ParseError,
    load_csv,
)

EXIT_DATA = 2
EXIT_FIT = 3
EXIT_PORT = 4
EXIT_MANIFEST = 5

_DATA_ERRORS = (
    ParseError,
    EmptyDataError,
    InvalidDatasetError,
    LevelError,
    MissingKeyError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
)


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


@click.group()
def main():
    """Psychometric analysis toolkit."""


@main.command()
@click.option("--data", required=True, type=click.Path(), help="Response CSV file.")
@click.option("--metadata", type=click.Path(), default=None, help="Item metadata CSV.")
@click.option(
    "--sections",
    default=None,
    help="Comma-separated subset of classical,regression,irt,dif,cat (default: all feasible).",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    default="report",
    show_default=True,
    help="Output directory.",
)
@click.option("--seed", type=int, default=1, show_default=True, help="Seed for simulations.")
def analyze(data, metadata, sections, out, seed):
    """Run analyses headless; write JSON, figures and a Markdown report."""
    from . import report as report_mod

    try:
        dataset = load_csv(data, metadata=metadata)
    except _DATA_ERRORS as exc:
        _fail(EXIT_DATA, f"data error: {exc}")
    if sections is None:
        wanted = report_mod.default_sections(dataset)
    else:
        wanted = [s.strip() for s in sections.split(",") if s.strip()]
        if not wanted:
            _fail(EXIT_DATA, "data error: --sections is empty")
    try:
        results = report_mod.run_sections(dataset, wanted, seed=seed)
    except report_mod.DataError as exc:
        _fail(EXIT_DATA, f"data error: {exc}")
    except report_mod.FitError as exc:
        _fail(EXIT_FIT, f"fit failure: {exc}")
    written = report_mod.write_report(dataset, results, out)
    for path in written:
        click.echo(str(path))


@main.command()
@click.option("--port", type=int, default=None, help="Listen port (default $PSYCHOFORGE_PORT or 8090).")
@click.option(
    "--module-roots",
    default=None,
    help=f"Extra module roots, separated by '{os.pathsep}'.",
)
def serve(port, module_roots):
    """Run the HTTP service until interrupted."""
    import uvicorn

    from .service import DEFAULT_PORT, create_app

    resolved = port if port is not None else int(os.environ.get("PSYCHOFORGE_PORT", DEFAULT_PORT))
    roots = [r for r in (module_roots or "").split(os.pathsep) if r]
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind(("127.0.0.1", resolved))
    except OSError:
        _fail(EXIT_PORT, f"port {resolved} is already in use")
    finally:
        probe.close()
    app = create_app(module_roots=roots)
    listing = app.state.registry
    click.echo(f"discovered {len(listing)} module(s):", err=True)
    for module_id, entry in listing.modules.items():
        state = "available" if entry.available else f"unavailable ({entry.diagnostic})"
        click.echo(f"  {module_id} [{entry.routed_category}] {state}", err=True)
    uvicorn.run(app, host="127.0.0.1", port=resolved)


@main.group()
def modules():
    """Inspect and validate analysis modules."""


@modules.command("list")
@click.option(
    "--module-roots",
    default=None,
    help=f"Extra module roots, separated by '{os.pathsep}'.",
)
def modules_list(module_roots):
    """List discovered modules grouped by category."""
    from .modules import default_registry

    roots = [r for r in (module_roots or "").split(os.pathsep) if r]
    registry = default_registry(roots)
    for category, entries in registry.by_category().items():
        click.echo(category)
        for entry in entries:
            state = "ok" if entry.available else f"unavailable: {entry.diagnostic}"
            click.echo(f"  {entry.manifest.id:<24} {entry.manifest.title:<28} {state}")
    for diag in registry.diagnostics:
        click.echo(f"warning: {diag}", err=True)


@modules.command("validate")
@click.argument("manifest", type=click.Path())
def modules_validate(manifest):
    """Check a modules.yml against the manifest grammar and field rules."""
    from .modules import KNOWN_CATEGORIES, ManifestError, parse_manifest_file
    from .modules.registry import FALLBACK_CATEGORY, REQUIRED_FIELDS

    try:
        parsed = parse_manifest_file(manifest)
    except FileNotFoundError:
        _fail(EXIT_MANIFEST, f"{manifest}: file not found")
    except ManifestError as exc:
        _fail(EXIT_MANIFEST, str(exc))
    problems = []
    for name, fields in parsed.items():
        binding = fields.get("binding")
        values = {
            "title": fields.get("title"),
            "category": fields.get("category"),
            "binding.ui": binding.get("ui") if isinstance(binding, dict) else None,
            "binding.server": binding.get("server") if isinstance(binding, dict) else None,
        }
        for field in REQUIRED_FIELDS:
            if not values[field]:
                problems.append(f"{name}: missing required field {field}")
        category = values["category"]
        # Declaring the fallback category by name is deliberate, not a typo.
        if category and category not in KNOWN_CATEGORIES and category != FALLBACK_CATEGORY:
            click.echo(
                f"warning: {name}: category {category!r} routed to Modules", err=True
            )
    if problems:
        for problem in problems:
            click.echo(problem, err=True)
        sys.exit(EXIT_MANIFEST)
    click.echo(f"{manifest}: {len(parsed)} module(s) valid")


if __name__ == "__main__":
    main()
