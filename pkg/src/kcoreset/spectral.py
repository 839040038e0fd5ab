"""Spectral clustering as weighted kernel k-means.

With degrees D_ii = sum_j A_ij, the spectral objective on a PSD similarity A
is weighted kernel k-means with weights D_ii and kernel D^-1 A D^-1.  The
degrees can be estimated from one shared uniform column sample.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .coreset import build_coreset
from .errors import SpectralError
from .kernels import BLOCK_ROWS, CLAMP_TOL, KernelOracle, PrecomputedKernel, WeightedSet
from .solver import evaluate_on_full, kernel_kmeanspp_seed, kernel_lloyd


@dataclass
class DegreeVector:
    values: np.ndarray
    sample_size: int | None = None  # None when exact

    @property
    def exact(self) -> bool:
        return self.sample_size is None


def similarity_from_matrix(A, psd_sample: int = 200, seed=0) -> KernelOracle:
    """Wrap a dense similarity matrix; it must be symmetric, finite, with a nonnegative diagonal.

    PSD is only spot-checked: a random ``psd_sample`` x ``psd_sample``
    principal submatrix (which is PSD whenever A is) must have no clearly
    negative eigenvalue.  ``psd_sample=0`` skips the check.
    """
    oracle = PrecomputedKernel(A)
    if np.any(oracle.diag < 0):
        raise SpectralError("similarity matrix has a negative diagonal entry")
    if psd_sample:
        m = min(psd_sample, oracle.n)
        idx = np.sort(np.random.default_rng(seed).choice(oracle.n, size=m, replace=False))
        eig = np.linalg.eigvalsh(oracle.block(idx, idx))
        if eig[0] < -CLAMP_TOL * max(1.0, float(np.abs(eig).max())):
            raise SpectralError(f"similarity matrix is not positive semidefinite "
                                f"(sampled eigenvalue {eig[0]:.3g})")
    return oracle


def _check_positive(values: np.ndarray, what: str):
    bad = np.flatnonzero(~(values > 0))
    if bad.size:
        raise SpectralError(f"{what} degree of row {int(bad[0])} is {values[bad[0]]!r}; "
                            f"row has no similarity mass" + (" in the sample" if what == "estimated" else ""))


def degrees_exact(A: KernelOracle) -> DegreeVector:
    n = A.n
    every = np.arange(n)
    out = np.empty(n)
    for lo in range(0, n, BLOCK_ROWS):
        out[lo:lo + BLOCK_ROWS] = A.block(every[lo:lo + BLOCK_ROWS], every).sum(axis=1)
    _check_positive(out, "exact")
    return DegreeVector(out)


def degrees_sampled(A: KernelOracle, sample_size: int = 1000, seed=None) -> DegreeVector:
    """(n / |S|) * sum_{j in S} A_ij with one column sample S shared by all rows."""
    n = A.n
    if not 1 <= sample_size <= n:
        raise SpectralError(f"sample_size must lie in [1, {n}], got {sample_size}")
    cols = np.sort(np.random.default_rng(seed).choice(n, size=sample_size, replace=False))
    every = np.arange(n)
    out = np.empty(n)
    for lo in range(0, n, BLOCK_ROWS):
        out[lo:lo + BLOCK_ROWS] = A.block(every[lo:lo + BLOCK_ROWS], cols).sum(axis=1)
    out *= n / sample_size
    _check_positive(out, "estimated")
    return DegreeVector(out, sample_size)


class NormalizedKernel(KernelOracle):
    """K(i, j) = A_ij / (D_ii D_jj), evaluated lazily from ``A``."""

    def __init__(self, A: KernelOracle, degrees: np.ndarray):
        self.base = A
        self.degrees = np.asarray(degrees, dtype=np.float64)
        self.n = A.n
        self.spec = A.spec
        self.diag = A.diag / (self.degrees * self.degrees)
        # identical rows of A with identical degrees give identical rows of K
        pairs = np.stack([A.keys.astype(np.float64), self.degrees], axis=1)
        self.keys = np.unique(pairs, axis=0, return_inverse=True)[1].reshape(-1).astype(np.int64)

    def _block(self, rows, cols):
        return self.base._block(rows, cols) / np.outer(self.degrees[rows], self.degrees[cols])


def spectral_reduce(A: KernelOracle, D: DegreeVector) -> tuple[np.ndarray, NormalizedKernel]:
    values = np.asarray(D.values, dtype=np.float64)
    if values.shape != (A.n,):
        raise SpectralError("one degree per row required")
    _check_positive(values, "exact" if D.exact else "estimated")
    return values.copy(), NormalizedKernel(A, values)


@dataclass
class SpectralResult:
    assignment: np.ndarray
    objective: float
    degrees: DegreeVector
    coreset_size: int
    timings: dict

    def metrics(self) -> dict:
        return {
            "objective": self.objective,
            "k": int(self.assignment.max()) + 1,
            "n": int(self.assignment.size),
            "coreset_size": self.coreset_size,
            "degrees": "exact" if self.degrees.exact else f"sampled({self.degrees.sample_size})",
            "timings": self.timings,
        }


def spectral_cluster(A: KernelOracle, k: int, coreset_N: int = 2000, degree_sample_size: int | None = 1000,
                     seed=None, max_iters: int = 100) -> SpectralResult:
    """Partition of [n] from coreset-based kernel k-means on the reduced problem.

    ``degree_sample_size=None`` (or >= n) uses exact degrees.  The reported
    objective is the weighted kernel k-means cost under the degrees used for
    clustering.
    """
    if k < 2:
        raise SpectralError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    if degree_sample_size is None:
        D = degrees_exact(A)
    else:
        D = degrees_sampled(A, min(degree_sample_size, A.n), rng)
    t1 = time.perf_counter()
    weights, K = spectral_reduce(A, D)
    X = WeightedSet(np.arange(A.n), weights)
    cs = build_coreset(K, X, k, 2.0, N=coreset_N, seed=rng)
    t2 = time.perf_counter()
    seeds = kernel_kmeanspp_seed(K, cs, k, rng)
    sol = kernel_lloyd(K, cs, seeds, k, max_iters)
    t3 = time.perf_counter()
    objective, assignment = evaluate_on_full(K, X, sol)
    t4 = time.perf_counter()
    timings = {"degrees": t1 - t0, "coreset": t2 - t1, "solve": t3 - t2, "evaluate": t4 - t3}
    return SpectralResult(assignment, objective, D, len(cs), timings)
