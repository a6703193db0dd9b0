"""Command-line defaults stored as canonical text ("maestro-config/1")."""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from . import canonical
from .canonical import as_real, check_keys, get_int, get_list
from .errors import SchemaError
from .features import ARTICULATION_GRID, DYNAMIC_GRID, TEMPO_GRID
from .generator import DEFAULT_ETA
from .playability import MIN_DURATION_MS, SATURATION_FRACTION
from .regression import DEFAULT_LAMBDA

CONFIG_VERSION = "maestro-config/1"
ENV_VAR = "MAESTRO_CONFIG"


@dataclass(frozen=True)
class CliConfig:
    lam: float = DEFAULT_LAMBDA
    eta: float = DEFAULT_ETA
    dynamic_grid: tuple = DYNAMIC_GRID
    articulation_grid: tuple = ARTICULATION_GRID
    tempo_grid: tuple = TEMPO_GRID
    min_duration_ms: float = MIN_DURATION_MS
    saturation_fraction: float = SATURATION_FRACTION
    workers: int = 1

    def override(self, **values) -> "CliConfig":
        return replace(self, **{k: v for k, v in values.items() if v is not None})

    def to_document(self) -> dict:
        doc = {"version": CONFIG_VERSION}
        for key, value in asdict(self).items():
            doc[_FILE_KEYS[key]] = list(value) if isinstance(value, tuple) else value
        return doc


# file key for each field; "lambda" is a Python keyword
_FILE_KEYS = {f.name: ("lambda" if f.name == "lam" else f.name) for f in fields(CliConfig)}


def _non_negative(value: float, key: str) -> float:
    if value < 0:
        raise SchemaError(key, "must be non-negative")
    return value


def parse_config(data) -> CliConfig:
    doc = canonical.loads(data, CONFIG_VERSION)
    check_keys(doc, "", ("version",), tuple(_FILE_KEYS.values()))
    values = {}
    for name, key in _FILE_KEYS.items():
        if key not in doc:
            continue
        if name.endswith("_grid"):
            items = get_list(doc, key)
            if not items:
                raise SchemaError(key, "grid is empty")
            if name == "dynamic_grid":
                if not all(isinstance(v, int) and not isinstance(v, bool) for v in items):
                    raise SchemaError(key, "dynamic offsets must be integers")
                values[name] = tuple(items)
            else:
                values[name] = tuple(as_real(v, key) for v in items)
        elif name == "workers":
            values[name] = get_int(doc, key, "", 1)
        else:
            values[name] = _non_negative(as_real(doc[key], key), key)
    if "saturation_fraction" in values and values["saturation_fraction"] > 1:
        raise SchemaError("saturation_fraction", "must lie in [0, 1]")
    for name, identity in (("dynamic_grid", 0), ("articulation_grid", 1.0), ("tempo_grid", 1.0)):
        if name in values and identity not in values[name]:
            raise SchemaError(name, f"grid must contain the identity value {identity}")
    return CliConfig(**values)


def write_config(config: CliConfig) -> bytes:
    return canonical.dumps(config.to_document())


def load_config(path: Optional[str] = None) -> CliConfig:
    """Read ``path``, else the file named by ``MAESTRO_CONFIG``, else defaults."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return CliConfig()
    return parse_config(Path(path).read_bytes())
