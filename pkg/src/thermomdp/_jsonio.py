"""Strict JSON loading with line-located schema errors."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema

from .errors import SchemaError

SCHEMA_VERSION = 1


def _locate(text: str, path: list) -> int | None:
    """Best-effort 1-based line of the element addressed by ``path``.

    Walks the string keys of the path in order, each search starting after
    the previous match, so nested keys resolve inside their parent object.
    """
    pos = 0
    found = False
    for key in path:
        if not isinstance(key, str):
            continue
        idx = text.find(json.dumps(key), pos)
        if idx < 0:
            break
        pos = idx
        found = True
    if not found:
        return None
    return text.count("\n", 0, pos) + 1


def loads_checked(text: str, schema: dict, source: str = "<string>") -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}", source, exc.lineno) from exc
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        if err.validator == "required":
            # message names the missing property; locate the parent object
            line = _locate(text, path) or 1
        else:
            line = _locate(text, path)
        label = "/".join(str(p) for p in path) or "<root>"
        raise SchemaError(f"{label}: {err.message}", source, line)
    return data


def load_checked(path: str | Path, schema: dict) -> dict:
    path = Path(path)
    return loads_checked(path.read_text(), schema, str(path))


def dump(data: Any, path: str | Path) -> None:
    """Write JSON deterministically (sorted keys, fixed float repr)."""
    Path(path).write_text(dumps(data))


def dumps(data: Any) -> str:
    return json.dumps(data, indent=1, sort_keys=True, allow_nan=False) + "\n"


def number_matrix(rows: int | None = None, cols: int | None = None) -> dict:
    row = {"type": "array", "items": {"type": "number"}}
    if cols is not None:
        row["minItems"] = row["maxItems"] = cols
    mat = {"type": "array", "items": row}
    if rows is not None:
        mat["minItems"] = mat["maxItems"] = rows
    return mat
