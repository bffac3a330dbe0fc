"""Attention-weight export and inspection."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .model import AttentionWeights


def export_attention(weights: AttentionWeights, query_index: int, path: str | Path, batch: int = 0) -> Path:
    """Write ``key,weight`` rows for one query, dropping out-of-range candidates."""
    keys, w = weights.row(query_index, batch)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["key", "weight"])
        for k, v in zip(keys, w):
            out.writerow([int(k), repr(float(v))])
    return path


def read_attention(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([int(r["key"]) for r in rows], dtype=np.int64),
            np.array([float(r["weight"]) for r in rows]))


def periodic_mass(keys: np.ndarray, weights: np.ndarray, query: int, period: int, tol: int = 2) -> tuple[float, float]:
    """Mean attention per key at offsets within ``tol`` of a multiple of ``period`` vs elsewhere."""
    off = np.abs(keys - query) % period
    on = np.minimum(off, period - off) <= tol
    mean_on = float(weights[on].mean()) if on.any() else 0.0
    mean_off = float(weights[~on].mean()) if (~on).any() else 0.0
    return mean_on, mean_off
