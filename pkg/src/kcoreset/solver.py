"""Kernelized k-means++ and Lloyd refinement on a (small) weighted set,
full-data evaluation, and an exhaustive oracle for tiny instances."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _hot
from .coreset import SeedCenters, dz_sampling
from .errors import KernelError, SolverError
from .kernels import CLAMP_TOL, Center, KernelOracle, WeightedSet, clamp_sqdist, cost_z

MONOTONE_SLACK = 1e-9
BRUTE_MAX_POINTS = 12
BRUTE_MAX_K = 4


@dataclass
class ClusteringSolution:
    centers: list[Center]
    assignment: np.ndarray
    objective: float
    iterations: int = 0
    history: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "centers": [c.to_dict() for c in self.centers],
            "objective": self.objective,
            "iterations": self.iterations,
            **self.meta,
        }


def kernel_kmeanspp_seed(oracle: KernelOracle, S: WeightedSet, k: int, seed=None) -> SeedCenters:
    return dz_sampling(oracle, S, k, 2.0, seed)


def _means_matrix(labels: np.ndarray, w: np.ndarray, k: int) -> np.ndarray:
    """(s, k) matrix whose column j holds the mean coefficients of cluster j."""
    s = labels.size
    A = np.zeros((s, k))
    A[np.arange(s), labels] = w
    A /= A.sum(axis=0, keepdims=True)
    return A


def _sqdists_from_gram(G: np.ndarray, gdiag: np.ndarray, A: np.ndarray) -> np.ndarray:
    GA = G @ A
    cc = np.einsum("ik,ik->k", A, GA)
    D = gdiag[:, None] - 2.0 * GA + cc[None, :]
    return clamp_sqdist(D, gdiag[:, None] + cc[None, :])


def _repair_empty(labels: np.ndarray, contrib: np.ndarray, k: int) -> np.ndarray:
    """Give every empty cluster the highest-cost point of a cluster that can spare one."""
    labels = labels.copy()
    sizes = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(sizes == 0):
        order = np.argsort(-contrib, kind="stable")
        for i in order:
            if sizes[labels[i]] > 1 and contrib[i] > 0:
                sizes[labels[i]] -= 1
                labels[i] = j
                sizes[j] = 1
                contrib[i] = 0.0
                break
    return labels


def _degenerate_solution(oracle: KernelOracle, S: WeightedSet) -> ClusteringSolution:
    keys = oracle.keys[S.indices]
    _, labels = np.unique(keys, return_inverse=True)
    labels = labels.reshape(-1)
    centers = [Center.mean(S.indices[labels == j], S.weights[labels == j]) for j in range(labels.max() + 1)]
    return ClusteringSolution(centers, labels, 0.0, 0, [0.0])


def kernel_lloyd(oracle: KernelOracle, S: WeightedSet, init: SeedCenters, k: int, max_iters: int = 100,
                 gram: np.ndarray | None = None) -> ClusteringSolution:
    """Lloyd iterations in feature space from the seeds' assignment.

    The Gram matrix of ``S`` is built once; each iteration is two dense
    products against the (s, k) mean-coefficient matrix.  Stops when the
    assignment repeats or after ``max_iters`` reassignments.
    """
    if k < 1:
        raise SolverError(f"k must be >= 1, got {k}")
    if oracle.distinct_count(S.indices) < k:
        return _degenerate_solution(oracle, S)
    G = oracle.gram(S.indices) if gram is None else gram
    gdiag = np.ascontiguousarray(np.diag(G))
    w = S.weights
    rows = np.arange(len(S))
    labels = np.asarray(init.assignment, dtype=np.int64)
    k = max(k, int(labels.max()) + 1)

    history: list[float] = []
    iterations = 0
    while True:
        A = _means_matrix(labels, w, k)
        D = _sqdists_from_gram(G, gdiag, A)
        obj = float(w @ D[rows, labels])
        if history and obj > history[-1] + MONOTONE_SLACK * max(abs(history[-1]), 1e-300):
            raise SolverError(f"Lloyd objective increased: {history[-1]!r} -> {obj!r}")
        history.append(obj)
        new = np.argmin(D, axis=1)
        if np.array_equal(new, labels) or iterations >= max_iters:
            labels = new
            break
        if np.bincount(new, minlength=k).min() == 0:
            new = _repair_empty(new, w * D[rows, new], k)
        labels = new
        iterations += 1

    # objective under nearest-center assignment with the final means
    A = _means_matrix(labels, w, k) if np.bincount(labels, minlength=k).min() > 0 else A
    D = _sqdists_from_gram(G, gdiag, A)
    labels = np.argmin(D, axis=1)
    obj = float(w @ D[rows, labels])
    centers = [Center.mean(S.indices[A[:, j] > 0], w[A[:, j] > 0]) for j in range(k)]
    return ClusteringSolution(centers, labels, obj, iterations, history)


def seeding_solution(oracle: KernelOracle, S: WeightedSet, seeds: SeedCenters) -> ClusteringSolution:
    """Seeds used directly as point centers (k-means++ without refinement)."""
    centers = [Center.point(int(i)) for i in seeds.indices]
    obj = float(S.weights @ seeds.distance ** 2)
    return ClusteringSolution(centers, seeds.assignment.copy(), obj, 0, [obj])


def solve(oracle: KernelOracle, S: WeightedSet, k: int, seed=None, max_iters: int = 100,
          lloyd: bool = True) -> ClusteringSolution:
    """k-means++ seeding on ``S``, optionally followed by Lloyd refinement."""
    t0 = time.perf_counter()
    seeds = kernel_kmeanspp_seed(oracle, S, k, seed)
    t1 = time.perf_counter()
    if lloyd:
        sol = kernel_lloyd(oracle, S, seeds, k, max_iters)
    else:
        sol = seeding_solution(oracle, S, seeds)
    t2 = time.perf_counter()
    sol.meta.update(seed=seed if isinstance(seed, (int, type(None))) else None,
                    timings={"seeding": t1 - t0, "lloyd": t2 - t1})
    return sol


def evaluate_on_full(oracle: KernelOracle, X: WeightedSet, solution: ClusteringSolution):
    """Objective and assignment of ``X`` against ``solution``'s centers."""
    for c in solution.centers:
        if c.support.min() < 0 or c.support.max() >= oracle.n:
            raise SolverError("center support index is not valid for this dataset")
    return cost_z(oracle, X, solution.centers, 2.0)


def _subset_costs(G: np.ndarray, w: np.ndarray, z: float) -> np.ndarray:
    """Cost of every nonempty subset (bitmask) against its own weighted mean."""
    s = w.size
    masks = np.arange(1 << s)
    M = ((masks[:, None] >> np.arange(s)[None, :]) & 1).astype(np.float64)
    Mw = M * w[None, :]
    W = Mw.sum(axis=1)
    W[0] = 1.0
    A = Mw / W[:, None]
    GA = A @ G
    cc = np.einsum("mi,mi->m", A, GA)
    gdiag = np.diag(G)
    D = gdiag[None, :] - 2.0 * GA + cc[:, None]
    D = np.where(M > 0, D, 0.0)
    D[(D < 0) & (D >= -CLAMP_TOL * np.maximum(1.0, gdiag[None, :] + cc[:, None]))] = 0.0
    if np.any(D < 0):
        raise KernelError("negative squared distance; kernel matrix is not PSD")
    dz = D if z == 2 else np.sqrt(D) ** z
    table = (Mw * dz).sum(axis=1)
    table[0] = 0.0
    return table


def brute_force_exact(oracle: KernelOracle, S: WeightedSet, k: int, z: float = 2.0) -> ClusteringSolution:
    """Minimum-cost k-partition of ``S`` by exhaustive enumeration.

    Each block is charged against its weighted mean, which is the optimal
    center only for z = 2.
    """
    reps = oracle.representatives(S.indices)
    s = reps.size
    if s > BRUTE_MAX_POINTS or k > BRUTE_MAX_K:
        raise SolverError(f"brute force limited to {BRUTE_MAX_POINTS} distinct points and k <= {BRUTE_MAX_K}")
    if k < 1:
        raise SolverError(f"k must be >= 1, got {k}")
    _, rep_of = np.unique(oracle.keys[S.indices], return_inverse=True)
    rep_of = rep_of.reshape(-1)
    # np.unique ranks entries by key; map each rank to its position in ``reps``
    entry_pos = np.argsort(oracle.keys[reps])[rep_of]
    w = np.bincount(entry_pos, weights=S.weights, minlength=s)

    if k >= s:
        labels = np.arange(s)
        best = 0.0
    else:
        table = _subset_costs(oracle.gram(reps), w, z)
        best, labels = _hot.best_partition(table, s, k)
        labels = np.asarray(labels)
    assignment = labels[entry_pos]
    centers = [Center.mean(reps[labels == j], w[labels == j]) for j in range(labels.max() + 1)]
    return ClusteringSolution(centers, assignment, float(best), 0, [float(best)])
