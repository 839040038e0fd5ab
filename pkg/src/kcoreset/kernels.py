"""Kernels, weighted sets and the kernel-trick distance/cost algebra.

Nothing here ever materializes a feature vector: every distance in feature
space is expanded into kernel evaluations,

    ||phi(x) - sum_a alpha_a phi(s_a)||^2
        = K(x, x) - 2 sum_a alpha_a K(x, s_a) + sum_ab alpha_a alpha_b K(s_a, s_b).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _hot
from .errors import KernelError

# squared distances in [-CLAMP_TOL * scale, 0) are rounding noise and become 0
CLAMP_TOL = 1e-9
# rows per kernel block when streaming over large index sets
BLOCK_ROWS = 4096

_KINDS = {"linear": _hot.LINEAR, "polynomial": _hot.POLYNOMIAL, "rbf": _hot.RBF}


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    ``rbf`` is exp(-||x-y||^2 / (2 sigma^2)); with ``rbf_unsquared`` the norm
    is not squared.  ``polynomial`` is (<x, y> + c)^degree.
    """

    kind: str = "rbf"
    sigma: float = 1.0
    c: float = 0.0
    degree: int = 2
    rbf_unsquared: bool = False
    matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "rbf", "precomputed"):
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise KernelError(f"rbf sigma must be positive, got {self.sigma}")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise KernelError(f"polynomial degree must be a positive integer, got {self.degree}")
            if not (np.isfinite(self.c) and self.c >= 0):
                raise KernelError(f"polynomial c must be >= 0, got {self.c}")
        if self.kind == "precomputed" and self.matrix is None:
            raise KernelError("precomputed kernel needs a matrix")

    def to_dict(self) -> dict:
        if self.kind == "rbf":
            return {"kind": "rbf", "sigma": self.sigma, "rbf_unsquared": self.rbf_unsquared}
        if self.kind == "polynomial":
            return {"kind": "polynomial", "c": self.c, "degree": int(self.degree)}
        return {"kind": self.kind}


@dataclass
class WeightedDataset:
    """Points with strictly positive weights.

    ``distinct_count`` is the number of distinct rows, which is what the
    iterated coreset construction drives down.
    """

    points: np.ndarray
    weights: np.ndarray
    distinct_count: int = -1

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.points.shape[0],):
            raise ValueError("one weight per point required")
        if not np.all(np.isfinite(self.weights) & (self.weights > 0)):
            raise ValueError("weights must be positive and finite")
        if self.distinct_count < 0:
            self.distinct_count = int(np.unique(self.points, axis=0).shape[0]) if len(self) else 0
        if self.distinct_count > len(self):
            raise ValueError("distinct_count exceeds number of entries")

    @classmethod
    def from_points(cls, points, weights=None) -> WeightedDataset:
        points = np.asarray(points, dtype=np.float64)
        if weights is None:
            weights = np.ones(points.shape[0])
        return cls(points, weights)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def as_set(self) -> WeightedSet:
        return WeightedSet(np.arange(len(self)), self.weights.copy())


@dataclass
class WeightedSet:
    """A weighted subset of an oracle's universe, by index."""

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.indices.shape != self.weights.shape or self.indices.ndim != 1:
            raise ValueError("indices and weights must be 1-d arrays of equal length")

    @classmethod
    def full(cls, n: int, weights=None) -> WeightedSet:
        return cls(np.arange(n), np.ones(n) if weights is None else weights)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


# --------------------------------------------------------------------------
# oracles


class KernelOracle:
    """Kernel access by dataset index.

    Subclasses provide ``_block`` and set ``n``, ``diag`` (cached K(x, x))
    and ``keys`` (equal keys mark identical elements).  Instances are not
    mutated after construction.
    """

    n: int
    diag: np.ndarray
    keys: np.ndarray
    spec: KernelSpec | None = None

    def _block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise KernelError(f"index out of range for a universe of {self.n}")
        return idx

    def block(self, rows, cols) -> np.ndarray:
        rows = self._check(np.atleast_1d(rows))
        cols = self._check(np.atleast_1d(cols))
        out = self._block(rows, cols)
        if not np.all(np.isfinite(out)):
            raise KernelError("non-finite kernel value; check kernel parameters")
        return out

    def __call__(self, i: int, j: int) -> float:
        return float(self.block([i], [j])[0, 0])

    def gram(self, idx) -> np.ndarray:
        """Gram matrix of ``idx``, filled block-row by block-row."""
        idx = self._check(idx)
        m = idx.shape[0]
        out = np.empty((m, m))
        for lo in range(0, m, BLOCK_ROWS):
            out[lo:lo + BLOCK_ROWS] = self.block(idx[lo:lo + BLOCK_ROWS], idx)
        return out

    def distinct_count(self, idx=None) -> int:
        keys = self.keys if idx is None else self.keys[np.asarray(idx, dtype=np.int64)]
        return int(np.unique(keys).shape[0])

    def representatives(self, idx) -> np.ndarray:
        """First index of ``idx`` for every distinct element, in order of appearance."""
        idx = np.asarray(idx, dtype=np.int64)
        _, first = np.unique(self.keys[idx], return_index=True)
        return idx[np.sort(first)]


def _row_keys(rows: np.ndarray) -> np.ndarray:
    if rows.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    _, inverse = np.unique(rows, axis=0, return_inverse=True)
    return inverse.reshape(-1).astype(np.int64)


class PointKernel(KernelOracle):
    """Analytic kernel (linear / polynomial / rbf) over stored vectors."""

    def __init__(self, points, spec: KernelSpec):
        if spec.kind == "precomputed":
            raise KernelError("use PrecomputedKernel for a precomputed matrix")
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.spec = spec
        self.n = self.points.shape[0]
        self._args = (
            _KINDS[spec.kind],
            float(spec.sigma if spec.kind == "rbf" else spec.c),
            int(spec.degree),
            bool(spec.rbf_unsquared),
        )
        kind, param, degree, _ = self._args
        self.diag = _hot.kernel_diag(self.points, kind, param, degree)
        if not np.all(np.isfinite(self.diag)):
            raise KernelError("non-finite kernel value on the diagonal; check kernel parameters")
        self.keys = _row_keys(self.points)

    def _block(self, rows, cols):
        return _hot.kernel_block(self.points[rows], self.points[cols], *self._args)


class PrecomputedKernel(KernelOracle):
    """Dense symmetric kernel matrix; entries are returned as stored."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise KernelError("precomputed kernel must be a square matrix")
        if not np.all(np.isfinite(matrix)):
            raise KernelError("precomputed kernel has non-finite entries")
        if not np.array_equal(matrix, matrix.T):
            raise KernelError("precomputed kernel is not symmetric")
        self.matrix = matrix
        self.spec = KernelSpec("precomputed", matrix=matrix)
        self.n = matrix.shape[0]
        self.diag = np.ascontiguousarray(np.diag(matrix))
        self.keys = _row_keys(matrix)

    def _block(self, rows, cols):
        return self.matrix[np.ix_(rows, cols)]


def make_oracle(spec: KernelSpec, points=None) -> KernelOracle:
    if spec.kind == "precomputed":
        return PrecomputedKernel(spec.matrix)
    if points is None:
        raise KernelError(f"{spec.kind} kernel needs data points")
    return PointKernel(points, spec)


# --------------------------------------------------------------------------
# distances


def clamp_sqdist(sq: np.ndarray, scale) -> np.ndarray:
    """Zero out rounding-level negative squared distances, in place.

    Anything below ``-CLAMP_TOL * max(1, scale)`` means the kernel is not PSD.
    ``scale`` broadcasts against ``sq``, or is a tuple of such arrays whose
    sum is only formed at the negative entries.
    """
    neg = sq < 0
    if np.any(neg):
        parts = scale if isinstance(scale, tuple) else (scale,)
        at_neg = sum(np.broadcast_to(p, sq.shape)[neg] for p in parts)
        tol = CLAMP_TOL * np.maximum(1.0, at_neg)
        if np.any(sq[neg] < -tol):
            worst = float(sq[neg].min())
            raise KernelError(f"negative squared distance {worst:.3e}; kernel matrix is not PSD")
        sq[neg] = 0.0
    return sq


def kernel_eval(oracle: KernelOracle, i: int, j: int) -> float:
    return oracle(i, j)


def kernel_distance(oracle: KernelOracle, i: int, j: int) -> float:
    if i == j:
        oracle._check([i])
        return 0.0
    kij = oracle(i, j)
    kii, kjj = oracle.diag[i], oracle.diag[j]
    sq = clamp_sqdist(np.array([kii + kjj - 2.0 * kij]), np.array([kii + kjj]))
    return float(np.sqrt(sq[0]))


def point_sqdists(oracle: KernelOracle, rows, cols) -> np.ndarray:
    """Squared feature-space distances between data points, shape (rows, cols)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    sq = oracle.block(rows, cols)
    sq *= -2.0
    drow, dcol = oracle.diag[rows][:, None], oracle.diag[cols][None, :]
    sq += drow
    sq += dcol
    # a point is at distance exactly 0 from itself
    order = np.argsort(cols, kind="stable")
    pos = np.minimum(np.searchsorted(cols[order], rows), cols.size - 1)
    hit = cols[order][pos] == rows
    if np.any(hit):
        sq[np.flatnonzero(hit), order[pos[hit]]] = 0.0
    return clamp_sqdist(sq, (drow, dcol))


@dataclass(frozen=True)
class Center:
    """A point of feature space written as sum_a coeffs[a] * phi(support[a])."""

    support: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        support = np.atleast_1d(np.asarray(self.support, dtype=np.int64))
        coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=np.float64))
        if support.size == 0:
            raise ValueError("center support must be nonempty")
        if support.shape != coeffs.shape:
            raise ValueError("support and coeffs differ in length")
        if np.unique(support).size != support.size:
            raise ValueError("center support indices must be distinct")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("center coefficients must be finite")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def point(cls, index: int) -> Center:
        return cls(np.array([index]), np.array([1.0]))

    @classmethod
    def mean(cls, indices, weights) -> Center:
        """Weighted mean of phi over ``indices``; repeated indices are merged."""
        indices = np.asarray(indices, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        uniq, inv = np.unique(indices, return_inverse=True)
        w = np.bincount(inv.reshape(-1), weights=weights, minlength=uniq.size)
        return cls(uniq, w / w.sum())

    @property
    def is_point(self) -> bool:
        return self.support.size == 1 and self.coeffs[0] == 1.0

    def gram_term(self, oracle: KernelOracle) -> float:
        """||c||^2 = sum_ab alpha_a alpha_b K(s_a, s_b)."""
        if self.is_point:
            return float(oracle.diag[self.support[0]])
        g = oracle.block(self.support, self.support)
        return float(self.coeffs @ g @ self.coeffs)

    def to_dict(self) -> dict:
        return {"support": self.support.tolist(), "coeffs": self.coeffs.tolist()}


def center_sqdist(oracle: KernelOracle, i: int, c: Center, gram_cc: float | None = None) -> float:
    if gram_cc is None:
        gram_cc = c.gram_term(oracle)
    kii = oracle.diag[oracle._check([i])[0]]
    cross = oracle.block([i], c.support)[0] @ c.coeffs
    sq = np.array([kii - 2.0 * cross + gram_cc])
    return float(clamp_sqdist(sq, np.array([kii + gram_cc]))[0])


def center_sqdists(oracle: KernelOracle, rows, centers: Sequence[Center], grams=None) -> np.ndarray:
    """Squared distances from every row to every center, shape (len(rows), k).

    All supports are fetched in one kernel block per row chunk, so a center
    with support size s costs O(s) kernel evaluations per point.
    """
    rows = np.asarray(rows, dtype=np.int64)
    k = len(centers)
    if grams is None:
        grams = np.array([c.gram_term(oracle) for c in centers])
    grams = np.asarray(grams, dtype=np.float64)
    support = np.concatenate([c.support for c in centers])
    coeffs = np.concatenate([c.coeffs for c in centers])
    offsets = np.cumsum([0] + [c.support.size for c in centers[:-1]])
    out = np.empty((rows.size, k))
    for lo in range(0, rows.size, BLOCK_ROWS):
        r = rows[lo:lo + BLOCK_ROWS]
        kb = oracle.block(r, support)
        kb *= coeffs
        cross = np.add.reduceat(kb, offsets, axis=1)
        out[lo:lo + BLOCK_ROWS] = oracle.diag[r][:, None] - 2.0 * cross + grams[None, :]
    # a point center that is the row itself is at distance exactly 0
    for j, c in enumerate(centers):
        if c.is_point:
            out[rows == c.support[0], j] = 0.0
    return clamp_sqdist(out, oracle.diag[rows][:, None] + grams[None, :])


def _power(sq: np.ndarray, z: float) -> np.ndarray:
    if z == 2:
        return sq
    return np.sqrt(sq) ** z


def cost_z(oracle: KernelOracle, X: WeightedSet, centers: Sequence[Center], z: float = 2.0):
    """Weighted (k, z) cost of ``X`` against ``centers``.

    Returns ``(total, assignment)`` where ``assignment[i]`` is the position in
    ``centers`` of the nearest center (lowest position on ties).
    """
    if len(centers) == 0:
        raise ValueError("center list is empty")
    if z < 1:
        raise ValueError(f"z must be >= 1, got {z}")
    sq = center_sqdists(oracle, X.indices, centers)
    assignment = np.argmin(sq, axis=1)
    nearest = sq[np.arange(len(X)), assignment]
    return float(X.weights @ _power(nearest, z)), assignment
