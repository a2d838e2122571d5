"""Response data ingestion, scoring and per-person derived variables.

Everything downstream (classical statistics, regression curves, IRT fits,
DIF scans, CAT replays) consumes the containers defined here. All containers
are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ITEM_TYPES = ("binary", "ordinal", "nominal")

#: Reserved data-CSV column names for per-person variables.
GROUP_COLUMN = "__group"
CRITERION_COLUMN = "__criterion"
MATCHING_COLUMN = "__matching"
RESERVED_COLUMNS = (GROUP_COLUMN, CRITERION_COLUMN, MATCHING_COLUMN)

MISSING_TOKENS = {"", "NA", "na", "NaN", "nan", "N/A"}

ORDINAL_MAX_CODE = 9


class ParseError(ValueError):
    """Malformed tabular input (ragged rows, bad cell values, bad metadata)."""


class EmptyDataError(ParseError):
    """Input table contains no data rows or no columns."""


class MissingKeyError(ValueError):
    """A nominal item has no key, so it cannot be scored."""


class LevelError(ValueError):
    """A requested factor level does not exist (or the selection is empty)."""


class InvalidDatasetError(ValueError):
    """A ResponseDataset invariant does not hold."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ResponseDataset:
    """Persons x items table of raw response codes plus per-person variables.

    ``responses`` is an object array: binary/ordinal cells hold ints, nominal
    cells hold strings, missing cells hold None. ``key`` holds the correct
    code for nominal items (None elsewhere); ``max_score`` holds the maximum
    score of ordinal items (1 for binary, 1 for keyed nominal items).
    """

    responses: np.ndarray
    item_names: tuple[str, ...]
    item_types: tuple[str, ...]
    key: tuple[str | None, ...]
    max_score: tuple[int, ...]
    group: np.ndarray | None = None
    criterion: np.ndarray | None = None
    matching: np.ndarray | None = None
    declared_codes: tuple[frozenset[str] | None, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "responses", _frozen(np.asarray(self.responses, dtype=object)))
        for name in ("group", "criterion", "matching"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _frozen(np.asarray(value, dtype=float)))
        self.validate()

    @property
    def persons(self) -> int:
        return self.responses.shape[0]

    @property
    def items(self) -> int:
        return self.responses.shape[1]

    def validate(self) -> None:
        """Check structural invariants, raising InvalidDatasetError."""
        if self.responses.ndim != 2:
            raise InvalidDatasetError("responses must be a 2-d table")
        n, m = self.responses.shape
        if n < 1 or m < 1:
            raise InvalidDatasetError("need at least one person and one item")
        for attr in (self.item_names, self.item_types, self.key, self.max_score):
            if len(attr) != m:
                raise InvalidDatasetError("per-item attributes must have one entry per item")
        for t in self.item_types:
            if t not in ITEM_TYPES:
                raise InvalidDatasetError(f"unknown item type {t!r}")
        for name in ("group", "criterion", "matching"):
            value = getattr(self, name)
            if value is not None and len(value) != n:
                raise InvalidDatasetError(f"{name} must have length {n}")
        if self.group is not None:
            observed = self.group[~np.isnan(self.group)]
            if not np.isin(observed, (0.0, 1.0)).all():
                raise InvalidDatasetError("group indicator must be 0/1")
        for i, t in enumerate(self.item_types):
            if t == "nominal" and self.key[i] is not None:
                observed = {str(v) for v in self.responses[:, i] if v is not None}
                declared = self.declared_codes[i] if self.declared_codes else None
                if self.key[i] not in observed and (declared is None or self.key[i] not in declared):
                    raise InvalidDatasetError(
                        f"key {self.key[i]!r} of item {self.item_names[i]!r} is neither "
                        "observed nor declared"
                    )

    def item_index(self, name: str) -> int:
        try:
            return self.item_names.index(name)
        except ValueError:
            raise KeyError(f"unknown item {name!r}") from None

    def observed_codes(self, item: int) -> list[str]:
        """Sorted distinct non-missing codes of one item, as strings."""
        codes = {str(v) for v in self.responses[:, item] if v is not None}
        declared = self.declared_codes[item] if self.declared_codes else None
        if declared:
            codes |= set(declared)
        if self.key[item] is not None:
            codes.add(self.key[item])
        return sorted(codes, key=_code_sort_key)


def _code_sort_key(code: str) -> tuple:
    try:
        return (0, float(code), code)
    except ValueError:
        return (1, 0.0, code)


@dataclass(frozen=True)
class ScoredMatrix:
    """Numeric persons x items score matrix; NaN marks missing cells."""

    scores: np.ndarray
    max_scores: tuple[int, ...]
    item_names: tuple[str, ...]
    unknown_code_warnings: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "scores", _frozen(np.asarray(self.scores, dtype=float)))

    @property
    def persons(self) -> int:
        return self.scores.shape[0]

    @property
    def items(self) -> int:
        return self.scores.shape[1]

    @property
    def has_warnings(self) -> bool:
        return bool(self.unknown_code_warnings)


@dataclass(frozen=True)
class TotalScore:
    """Per-person total over non-missing item scores, plus a z-scored copy.

    All-missing rows get NaN totals and are excluded from standardization.
    ``degenerate`` is set when the totals have zero variance, in which case
    the standardized values are all 0 by convention.
    """

    values: np.ndarray
    standardized: np.ndarray
    mean: float
    sd: float
    degenerate: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=float)))
        object.__setattr__(self, "standardized", _frozen(np.asarray(self.standardized, dtype=float)))


def _read_rows(path: str | Path, delimiter: str) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delimiter) if row]
    return rows


def _parse_cell(raw: str) -> str | None:
    value = raw.strip()
    return None if value in MISSING_TOKENS else value


def _infer_type(codes: set[str]) -> tuple[str, int]:
    """Infer (item_type, max_score) from the non-missing codes of a column.

    All-{0,1} columns are binary; integer codes forming a complete {0..K}
    ladder with K <= 9 are ordinal; anything else is nominal.
    """
    if codes <= {"0", "1"}:
        return "binary", 1
    try:
        ints = {int(c) for c in codes}
    except ValueError:
        return "nominal", 1
    if all(str(i) == c for i, c in zip(sorted(ints), sorted(codes, key=int))):
        k = max(ints)
        if min(ints) >= 0 and k <= ORDINAL_MAX_CODE and ints == set(range(k + 1)):
            return "ordinal", k
    return "nominal", 1


def _load_metadata(path: str | Path) -> dict[str, dict]:
    """Read the item metadata sidecar: columns item,type,key,max_score."""
    rows = _read_rows(path, ",")
    if not rows:
        raise ParseError(f"metadata file {path} is empty")
    header = [c.strip() for c in rows[0]]
    required = {"item", "type"}
    if not required <= set(header):
        raise ParseError("metadata needs at least 'item' and 'type' columns")
    meta: dict[str, dict] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"metadata row {lineno} has {len(row)} cells, expected {len(header)}")
        record = dict(zip(header, (c.strip() for c in row)))
        item_type = record.get("type", "")
        if item_type not in ITEM_TYPES:
            raise ParseError(f"metadata row {lineno}: unknown type {item_type!r}")
        entry: dict = {"type": item_type}
        if record.get("key"):
            entry["key"] = record["key"]
        if record.get("max_score"):
            try:
                entry["max_score"] = int(record["max_score"])
            except ValueError:
                raise ParseError(f"metadata row {lineno}: max_score must be an integer") from None
        meta[record["item"]] = entry
    return meta


def load_csv(
    path: str | Path,
    *,
    delimiter: str = ",",
    header: bool = True,
    metadata: str | Path | None = None,
) -> ResponseDataset:
    """Load a response table from CSV.

    The header row names the items; the reserved columns ``__group``,
    ``__criterion`` and ``__matching`` become per-person variables. Item
    types are inferred from the codes unless a metadata sidecar overrides
    them (columns ``item,type,key,max_score``).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    rows = _read_rows(path, delimiter)
    if not rows:
        raise EmptyDataError(f"{path} contains no rows")

    if header:
        names = [c.strip() for c in rows[0]]
        body = rows[1:]
    else:
        names = [f"item{j + 1}" for j in range(len(rows[0]))]
        body = rows
    if not body:
        raise EmptyDataError(f"{path} has a header but no data rows")

    width = len(names)
    for lineno, row in enumerate(body, start=2 if header else 1):
        if len(row) != width:
            raise ParseError(f"row {lineno} has {len(row)} cells, expected {width}")

    cells = [[_parse_cell(raw) for raw in row] for row in body]

    reserved_idx = {name: j for j, name in enumerate(names) if name in RESERVED_COLUMNS}
    item_cols = [j for j, name in enumerate(names) if name not in RESERVED_COLUMNS]
    if not item_cols:
        raise EmptyDataError(f"{path} has no item columns")

    def person_var(column: str) -> np.ndarray | None:
        j = reserved_idx.get(column)
        if j is None:
            return None
        out = np.full(len(cells), np.nan)
        for p, row in enumerate(cells):
            if row[j] is not None:
                try:
                    out[p] = float(row[j])
                except ValueError:
                    raise ParseError(f"column {column}: non-numeric value {row[j]!r}") from None
        return out

    meta = _load_metadata(metadata) if metadata else {}

    item_names: list[str] = []
    item_types: list[str] = []
    keys: list[str | None] = []
    max_scores: list[int] = []
    columns: list[list] = []
    for j in item_cols:
        name = names[j]
        raw = [row[j] for row in cells]
        codes = {v for v in raw if v is not None}
        if codes:
            inferred_type, inferred_max = _infer_type(codes)
        else:
            inferred_type, inferred_max = "binary", 1
        entry = meta.get(name, {})
        item_type = entry.get("type", inferred_type)
        key = entry.get("key")
        if item_type == "ordinal":
            max_score = entry.get("max_score", inferred_max if inferred_type == "ordinal" else None)
            if max_score is None:
                raise ParseError(f"item {name!r}: ordinal type declared but no max_score available")
        else:
            max_score = 1

        parsed: list = []
        for value in raw:
            if value is None:
                parsed.append(None)
            elif item_type in ("binary", "ordinal"):
                try:
                    parsed.append(int(value))
                except ValueError:
                    raise ParseError(
                        f"item {name!r}: non-integer code {value!r} for {item_type} item"
                    ) from None
            else:
                parsed.append(value)
        item_names.append(name)
        item_types.append(item_type)
        keys.append(key if item_type == "nominal" else None)
        max_scores.append(int(max_score))
        columns.append(parsed)

    responses = np.empty((len(cells), len(item_cols)), dtype=object)
    for jj, col in enumerate(columns):
        for p, value in enumerate(col):
            responses[p, jj] = value

    return ResponseDataset(
        responses=responses,
        item_names=tuple(item_names),
        item_types=tuple(item_types),
        key=tuple(keys),
        max_score=tuple(max_scores),
        group=person_var(GROUP_COLUMN),
        criterion=person_var(CRITERION_COLUMN),
        matching=person_var(MATCHING_COLUMN),
    )


def score(dataset: ResponseDataset) -> ScoredMatrix:
    """Turn raw response codes into numeric scores.

    Nominal responses score 1 iff they equal the item key, binary and
    ordinal responses are copied through, missing stays missing. Codes
    outside an item's valid domain score 0 and set a warning flag.
    """
    n, m = dataset.responses.shape
    scores = np.full((n, m), np.nan)
    warnings: list[tuple[int, int]] = []
    for i in range(m):
        item_type = dataset.item_types[i]
        if item_type == "nominal" and dataset.key[i] is None:
            raise MissingKeyError(f"nominal item {dataset.item_names[i]!r} has no key")
        declared = dataset.declared_codes[i] if dataset.declared_codes else None
        for p in range(n):
            value = dataset.responses[p, i]
            if value is None:
                continue
            if item_type == "nominal":
                code = str(value)
                if declared is not None and code not in declared:
                    warnings.append((p, i))
                    scores[p, i] = 0.0
                else:
                    scores[p, i] = 1.0 if code == dataset.key[i] else 0.0
            else:
                value = int(value)
                if 0 <= value <= dataset.max_score[i]:
                    scores[p, i] = float(value)
                else:
                    warnings.append((p, i))
                    scores[p, i] = 0.0
    return ScoredMatrix(
        scores=scores,
        max_scores=dataset.max_score,
        item_names=dataset.item_names,
        unknown_code_warnings=tuple(warnings),
    )


def encode_categories(dataset: ResponseDataset) -> tuple[ScoredMatrix, tuple]:
    """Code nominal responses as categories 0..K instead of correct/incorrect.

    Nominal-model fits need the full response categories, not the keyed
    0/1 collapse that :func:`score` produces. The key (when present)
    becomes the baseline category 0; the remaining codes follow in the
    deterministic order numeric-first, then lexicographic. Binary and
    ordinal scores copy through unchanged. Returns the coded matrix plus,
    per item, the code order (None for non-nominal items). Observed codes
    outside an item's declared domain have no category to go to: they
    stay missing and set a warning flag.
    """
    n, m = dataset.responses.shape
    scores = np.full((n, m), np.nan)
    warnings: list[tuple[int, int]] = []
    levels: list[tuple[str, ...] | None] = []
    max_scores: list[int] = []
    for i in range(m):
        if dataset.item_types[i] != "nominal":
            levels.append(None)
            max_scores.append(dataset.max_score[i])
            for p in range(n):
                value = dataset.responses[p, i]
                if value is None:
                    continue
                value = int(value)
                if 0 <= value <= dataset.max_score[i]:
                    scores[p, i] = float(value)
                else:
                    warnings.append((p, i))
                    scores[p, i] = 0.0
            continue
        declared = dataset.declared_codes[i] if dataset.declared_codes else None
        if declared is not None:
            domain = set(declared)
        else:
            domain = {
                str(dataset.responses[p, i])
                for p in range(n)
                if dataset.responses[p, i] is not None
            }
        key = dataset.key[i]
        if key is not None:
            domain.add(key)
            order = [key] + sorted(domain - {key}, key=_code_sort_key)
        else:
            order = sorted(domain, key=_code_sort_key)
        code_of = {code: k for k, code in enumerate(order)}
        for p in range(n):
            value = dataset.responses[p, i]
            if value is None:
                continue
            k = code_of.get(str(value))
            if k is None:
                warnings.append((p, i))
            else:
                scores[p, i] = float(k)
        levels.append(tuple(order))
        max_scores.append(max(1, len(order) - 1))
    coded = ScoredMatrix(
        scores=scores,
        max_scores=tuple(max_scores),
        item_names=dataset.item_names,
        unknown_code_warnings=tuple(warnings),
    )
    return coded, tuple(levels)


def total_scores(scored: ScoredMatrix) -> TotalScore:
    """Row sums over non-missing cells plus their z-scores.

    Standardization uses the sample standard deviation (ddof=1) over persons
    with at least one scored response.
    """
    if scored.items < 1:
        raise ValueError("need at least one item")
    with np.errstate(invalid="ignore"):
        all_missing = np.isnan(scored.scores).all(axis=1)
        values = np.where(all_missing, np.nan, np.nansum(scored.scores, axis=1))
    valid = values[~np.isnan(values)]
    mean = float(valid.mean()) if valid.size else float("nan")
    sd = float(valid.std(ddof=1)) if valid.size > 1 else 0.0
    degenerate = not (sd > 0)
    if degenerate:
        standardized = np.where(np.isnan(values), np.nan, 0.0)
        sd = 0.0
    else:
        standardized = (values - mean) / sd
    return TotalScore(values=values, standardized=standardized, mean=mean, sd=sd, degenerate=degenerate)


def binarize_factor(values, positive_levels) -> np.ndarray:
    """Map a categorical vector to a 0/1 indicator of the positive levels.

    Missing entries (None/NaN) stay missing. ``positive_levels`` must be a
    nonempty subset of the observed levels.
    """
    levels = []
    for v in values:
        if v is None or (isinstance(v, float) and np.isnan(v)):
            levels.append(None)
        else:
            levels.append(str(v))
    positive = {str(lv) for lv in positive_levels}
    if not positive:
        raise LevelError("positive_levels must not be empty")
    observed = {lv for lv in levels if lv is not None}
    unknown = positive - observed
    if unknown:
        raise LevelError(f"unknown level(s): {sorted(unknown)}")
    return np.array([np.nan if lv is None else float(lv in positive) for lv in levels])
