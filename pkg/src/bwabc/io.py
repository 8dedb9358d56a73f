"""CSV field dumps and JSON manifests."""
from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

FIELD_COLUMNS = ("t", "cell", "m", "phi")


def write_fields_csv(path, times, fields) -> Path:
    """One row per (time, cell); `fields` has shape (nt, n_cells, 2)."""
    path = Path(path)
    f = np.asarray(fields, dtype=float).reshape(len(times), -1, 2)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for k, t in enumerate(times):
            for c in range(f.shape[1]):
                w.writerow((repr(float(t)), c, repr(float(f[k, c, 0])), repr(float(f[k, c, 1]))))
    return path


def read_fields_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != FIELD_COLUMNS:
            raise ValueError(f"unexpected header {header}")
        rows = [(float(t), int(c), float(m), float(p)) for t, c, m, p in r]
    times = np.array(sorted({row[0] for row in rows}))
    n_cells = max(row[1] for row in rows) + 1 if rows else 0
    out = np.full((times.size, n_cells, 2), np.nan)
    index = {t: k for k, t in enumerate(times)}
    for t, c, m, p in rows:
        out[index[t], c] = (m, p)
    return times, out


def write_table_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if v != v:
            return None
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def load_schema(name: str) -> dict:
    return json.loads(resources.files("bwabc").joinpath("schemas", f"{name}.schema.json").read_text())
