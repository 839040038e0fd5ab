"""Dataset / matrix ingestion and small output helpers."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import IngestError
from .kernels import WeightedDataset


def ingest(path, weighted: bool = False, subsample: int | None = None, seed=None) -> WeightedDataset:
    """Read a headerless numeric CSV, one point per row.

    With ``weighted`` the last column is the point weight.  ``subsample``
    keeps that many rows, drawn uniformly without replacement, in file order.
    """
    path = Path(path)
    try:
        data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from None
    if data.size == 0:
        raise IngestError(f"{path}: no rows")
    if not np.all(np.isfinite(data)):
        raise IngestError(f"{path}: non-finite value")
    if weighted:
        if data.shape[1] < 2:
            raise IngestError(f"{path}: weighted rows need at least one coordinate and a weight")
        points, weights = data[:, :-1], data[:, -1]
        bad = np.flatnonzero(weights <= 0)
        if bad.size:
            raise IngestError(f"{path}: row {int(bad[0]) + 1} has nonpositive weight {weights[bad[0]]!r}")
    else:
        points, weights = data, np.ones(data.shape[0])
    if subsample is not None and subsample < points.shape[0]:
        if subsample < 1:
            raise IngestError("subsample must be >= 1")
        keep = np.sort(np.random.default_rng(seed).choice(points.shape[0], size=subsample, replace=False))
        points, weights = points[keep], weights[keep]
    return WeightedDataset(np.ascontiguousarray(points), np.ascontiguousarray(weights))


def load_matrix(path) -> np.ndarray:
    """Dense square matrix from ``.npy`` or headerless CSV."""
    path = Path(path)
    try:
        if path.suffix == ".npy":
            m = np.load(path, allow_pickle=False)
        else:
            m = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise IngestError(f"{path}: {exc}") from None
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise IngestError(f"{path}: expected a square matrix, got shape {m.shape}")
    return m


def blob_hash(path) -> str:
    """git-style object id of a file's contents."""
    data = Path(path).read_bytes()
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
