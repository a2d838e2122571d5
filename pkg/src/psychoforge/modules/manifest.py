"""Manifest file parsing for add-on modules.

Two files describe a module package:

``PACKAGE.meta``
    Line-oriented ``key: value`` pairs. A package participates in
    discovery only when it contains the flag line, byte for byte::

        sia-module: true

``modules.yml``
    A deliberately small YAML subset, parsed here with an exact grammar
    rather than a general YAML reader so that what we accept is precisely
    what we document::

        <module-name>:
          title: <scalar>
          category: <scalar>
          binding:
            ui: <scalar>
            server: <scalar>

    Module names start a line at column zero and match
    ``[A-Za-z_][A-Za-z0-9_-]*``. Nested keys are indented by a consistent
    number of spaces per level. Scalars may be bare or quoted with a
    matching pair of single or double quotes. Comments (``#``) and blank
    lines are ignored. Tabs in indentation, document markers (``---``),
    anchors/aliases (``&``, ``*``), and flow collections (``{``, ``[``)
    are rejected: they signal a full-YAML file this parser must not
    half-understand. Unknown keys parse fine; validation happens later so
    a single odd entry never poisons the file.
"""

from __future__ import annotations

import re
from pathlib import Path

MODULE_FLAG_LINE = "sia-module: true"
_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


class ManifestError(ValueError):
    """The manifest file violates the documented grammar."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        prefix = f"{source or 'manifest'}"
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}")
        self.line = line
        self.source = source


def _strip_comment(raw: str) -> str:
    # A comment starts at an unquoted #; quoted scalars may contain #.
    quote = None
    for pos, ch in enumerate(raw):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            return raw[:pos]
    return raw


def _parse_scalar(value: str, line_no: int, source: str) -> str:
    value = value.strip()
    if value[:1] in ("&", "*"):
        raise ManifestError("anchors and aliases are not part of the subset", line_no, source)
    if value[:1] in ("{", "["):
        raise ManifestError("flow collections are not part of the subset", line_no, source)
    if len(value) >= 2 and value[0] == value[-1] and value[0] in ("'", '"'):
        return value[1:-1]
    return value


def parse_manifest_text(text: str, source: str = "modules.yml") -> dict[str, dict]:
    """Parse modules.yml content into {module_name: {key: scalar | {..}}}."""
    modules: dict[str, dict] = {}
    module_name: str | None = None
    subblock: str | None = None
    level1_indent: int | None = None
    level2_indent: int | None = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if "\t" in raw[: len(raw) - len(raw.lstrip())]:
            raise ManifestError("tabs are not allowed in indentation", line_no, source)
        line = _strip_comment(raw).rstrip()
        if not line.strip():
            continue
        stripped = line.lstrip()
        if stripped in ("---", "..."):
            raise ManifestError("multi-document markers are not part of the subset", line_no, source)
        indent = len(line) - len(stripped)
        if ":" not in stripped:
            raise ManifestError("expected 'key: value' or 'key:'", line_no, source)
        key, _, rest = stripped.partition(":")
        key = key.strip()
        if rest and not rest.startswith(" ") and rest.strip():
            raise ManifestError("a space must follow ':' before the value", line_no, source)

        if indent == 0:
            if rest.strip():
                raise ManifestError("top-level entries are module names with no value", line_no, source)
            if not _NAME_RE.match(key):
                raise ManifestError(f"invalid module name {key!r}", line_no, source)
            if key in modules:
                raise ManifestError(f"duplicate module name {key!r}", line_no, source)
            modules[key] = {}
            module_name = key
            subblock = None
            continue

        if module_name is None:
            raise ManifestError("indented line before any module name", line_no, source)

        if level1_indent is None:
            level1_indent = indent
        if indent == level1_indent:
            subblock = None
            block = modules[module_name]
        elif level2_indent is None and indent > level1_indent and subblock is not None:
            level2_indent = indent
            block = modules[module_name][subblock]
        elif indent == level2_indent and subblock is not None:
            block = modules[module_name][subblock]
        else:
            raise ManifestError(f"unexpected indentation of {indent} spaces", line_no, source)

        if key in block:
            raise ManifestError(f"duplicate key {key!r}", line_no, source)
        if rest.strip():
            block[key] = _parse_scalar(rest, line_no, source)
        else:
            if indent != level1_indent:
                raise ManifestError("nesting deeper than two levels is not supported", line_no, source)
            block[key] = {}
            subblock = key

    if not modules:
        raise ManifestError("no module entries found", None, source)
    return modules


def parse_manifest_file(path: str | Path) -> dict[str, dict]:
    path = Path(path)
    return parse_manifest_text(path.read_text(encoding="utf-8"), source=str(path))


def parse_package_meta(path: str | Path) -> tuple[dict[str, str], bool]:
    """Read PACKAGE.meta; returns (key/value pairs, module-flag present)."""
    path = Path(path)
    meta: dict[str, str] = {}
    flagged = False
    for raw in path.read_text(encoding="utf-8").splitlines():
        if raw.rstrip() == MODULE_FLAG_LINE:
            flagged = True
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if sep:
            meta[key.strip()] = value.strip()
    return meta, flagged
