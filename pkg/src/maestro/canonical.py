"""Deterministic canonical text shared by all ``maestro-*/1`` file formats.

Documents are JSON objects with sorted keys, two-space indentation, and a
``version`` field. Containers whose compact form fits in 100 characters are
written on one line. Integers print plainly and reals use the shortest
decimal that round-trips (Python's ``repr``), so a value has exactly one
byte representation.
"""
from __future__ import annotations

import json
import math

from .errors import CanonicalSyntaxError, SchemaError, VersionError

INLINE_WIDTH = 100


def _scalar(value) -> str:
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"non-finite value {value!r} cannot be serialized")
    return json.dumps(value, ensure_ascii=False)


def _compact(value) -> str:
    if isinstance(value, dict):
        items = ", ".join(f"{_scalar(k)}: {_compact(value[k])}" for k in sorted(value))
        return "{" + items + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_compact(v) for v in value) + "]"
    return _scalar(value)


def _emit(value, indent: int, out: list) -> None:
    compact = _compact(value)
    if not isinstance(value, (dict, list, tuple)) or len(compact) + indent <= INLINE_WIDTH or not value:
        out.append(compact)
        return
    pad = "  " * (indent + 1)
    if isinstance(value, dict):
        out.append("{\n")
        for n, key in enumerate(sorted(value)):
            out.append(f"{pad}{_scalar(key)}: ")
            _emit(value[key], indent + 1, out)
            out.append(",\n" if n < len(value) - 1 else "\n")
        out.append("  " * indent + "}")
    else:
        out.append("[\n")
        for n, item in enumerate(value):
            out.append(pad)
            _emit(item, indent + 1, out)
            out.append(",\n" if n < len(value) - 1 else "\n")
        out.append("  " * indent + "]")


def dumps(document: dict) -> bytes:
    out: list = []
    _emit(document, 0, out)
    out.append("\n")
    return "".join(out).encode("utf-8")


def _reject_duplicates(pairs):
    obj = {}
    for key, value in pairs:
        if key in obj:
            raise SchemaError(key, "duplicate key")
        obj[key] = value
    return obj


def _reject_constant(name):
    raise SchemaError(name, "non-finite")


def loads(data: bytes, version: str) -> dict:
    """Parse canonical text and check its ``version`` field."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CanonicalSyntaxError(f"invalid UTF-8 at byte {exc.start}", 1, 1) from None
    else:
        text = data
    try:
        document = json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise CanonicalSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(document, dict):
        raise SchemaError("<document>", "expected an object")
    if "version" not in document:
        raise SchemaError("version", "missing")
    if document["version"] != version:
        raise VersionError(document["version"], version)
    return document


# -- schema helpers -----------------------------------------------------------

def check_keys(obj, path: str, required, optional=()) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(path or "<document>", "expected an object")
    for key in required:
        if key not in obj:
            raise SchemaError(f"{path}.{key}" if path else key, "missing")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}" if path else key, "unknown field")


def get_int(obj, key, path: str = "", minimum=None, maximum=None) -> int:
    value = obj[key]
    where = f"{path}.{key}" if path else str(key)
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(where, "expected an integer")
    if minimum is not None and value < minimum or maximum is not None and value > maximum:
        raise SchemaError(where, f"{value} outside [{minimum}, {maximum}]")
    return value


def as_real(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(where, "expected a number")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(where, "non-finite")
    return value


def get_real(obj, key, path: str = "") -> float:
    return as_real(obj[key], f"{path}.{key}" if path else str(key))


def get_str(obj, key, path: str = "") -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaError(f"{path}.{key}" if path else str(key), "expected a string")
    return value


def get_list(obj, key, path: str = "") -> list:
    value = obj[key]
    if not isinstance(value, list):
        raise SchemaError(f"{path}.{key}" if path else str(key), "expected an array")
    return value
