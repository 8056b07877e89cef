"""Output writers: CSV tables, raw float64 fields with JSON sidecars, PGM images."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats to JSON values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return "nan" if math.isnan(x) else repr(x)
    return v


def write_csv(path, header, rows):
    """RFC 4180 CSV (CRLF line endings, minimal quoting); floats use repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_field(path, array, **meta):
    """Write ``array`` as little-endian float64 to ``path`` plus ``path + .json``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a = np.ascontiguousarray(array, dtype="<f8")
    path.write_bytes(a.tobytes())
    side = {"dtype": "float64", "byte_order": "little", "shape": list(a.shape)}
    side.update(meta)
    write_json(str(path) + ".json", side)
    return path


def read_field(path):
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["shape"])
    return data.copy(), meta


def write_pgm(path, field):
    """Binary 8-bit PGM with min/max normalisation; returns (min, max)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = np.asarray(field, dtype=float)
    if f.ndim == 1:
        f = f[None, :]
    lo, hi = float(f.min()), float(f.max())
    span = hi - lo
    scaled = np.zeros_like(f) if span == 0 else (f - lo) / span
    img = np.round(scaled * 255.0).astype(np.uint8)
    rows, cols = img.shape
    path.write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes())
    return lo, hi


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    cols, rows = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)


def write_field_with_image(stem, field, **meta):
    """Raw field, sidecar and PGM image sharing ``stem``; the sidecar records the image scale."""
    lo, hi = write_pgm(str(stem) + ".pgm", field)
    return write_field(str(stem) + ".bin", field, image_min=lo, image_max=hi, **meta)
