"""Published JSON schemas for service responses and module documents."""

import json
from importlib import resources

SCHEMA_NAMES = (
    "dataset_summary",
    "classical",
    "regression",
    "irt",
    "dif",
    "cat",
    "modules_list",
    "module_document",
    "module_ui",
)


def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise KeyError(f"unknown schema {name!r}")
    text = resources.files(__package__).joinpath(f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
