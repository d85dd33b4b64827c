"""JSON plumbing: floats travel as C99 hex literals so documents round-trip bit-exactly."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class SchemaError(ValueError):
    pass


def pack(obj):
    """Recursively convert ``obj`` into JSON-safe data with hex-encoded floats."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return {"hex": float(obj).hex()}
    if isinstance(obj, np.ndarray):
        if obj.dtype.kind in "iub":
            return {"int_array": obj.ravel().tolist(), "shape": list(obj.shape)}
        return {"hex_array": [float(x).hex() for x in obj.ravel()], "shape": list(obj.shape)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: pack(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): pack(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [pack(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def unpack(obj):
    """Inverse of :func:`pack` (tuples come back as lists)."""
    if isinstance(obj, dict):
        if set(obj) == {"hex"}:
            return float.fromhex(obj["hex"])
        if set(obj) == {"hex_array", "shape"}:
            flat = np.array([float.fromhex(s) for s in obj["hex_array"]], dtype=float)
            return flat.reshape(obj["shape"])
        if set(obj) == {"int_array", "shape"}:
            return np.array(obj["int_array"], dtype=np.int64).reshape(obj["shape"])
        return {k: unpack(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [unpack(v) for v in obj]
    return obj


def schema_tag(kind: str) -> str:
    return f"spikyball/{kind}@{FORMAT_VERSION}"


def check_schema(doc: dict, kind: str) -> None:
    tag = doc.get("schema")
    if tag != schema_tag(kind):
        raise SchemaError(f"expected schema {schema_tag(kind)!r}, found {tag!r}")


def dumps(doc) -> str:
    return json.dumps(pack(doc), indent=1, sort_keys=False)


def loads(text: str):
    return unpack(json.loads(text))


def write_json(path, doc) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc) + "\n")
    return path


def read_json(path, kind: str | None = None):
    doc = loads(Path(path).read_text())
    if kind is not None:
        check_schema(doc, kind)
    return doc


def finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None
