"""Deterministic file input/output helpers.

All experiment artifacts must be byte-identical across reruns with the same
config and seed, so every writer here pins newline style, float formatting,
and JSON key order. Wall-clock data never goes through these helpers into
metric files.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os

import numpy as np

from .errors import ConfigError, DataFormatError


def fmt_value(v) -> str:
    """Render a cell for CSV output. Floats use repr, the shortest string
    that round-trips, so output bytes are a pure function of the value."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def encode_array(arr: np.ndarray) -> dict:
    """Lossless array → JSON-safe dict. Bytes are little-endian row-major."""
    a = np.ascontiguousarray(arr)
    return {
        "dtype": a.dtype.str,
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def decode_array(spec: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(spec["data"])
        arr = np.frombuffer(raw, dtype=np.dtype(spec["dtype"]))
        return arr.reshape(spec["shape"]).copy()
    except (KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"bad array payload: {exc}") from exc


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_kv_config(path) -> dict[str, str]:
    """Parse a flat key=value config file. Blank lines and #-comments are
    skipped; values are kept as strings for the caller to coerce."""
    out: dict[str, str] = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out
