"""Inner loops, each in a numba and a plain-numpy flavour.

The numba versions are used when numba imports and ``KCORESET_NO_NUMBA`` is
unset (or "0").  Both flavours are always importable under their ``nb_`` /
``np_`` names so tests and ``benchmarks/bench_accel.py`` can compare them.
"""
from __future__ import annotations

import os

import numpy as np
from scipy.spatial.distance import cdist

LINEAR, POLYNOMIAL, RBF = 0, 1, 2

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("KCORESET_NO_NUMBA", "0") in ("", "0")


def _njit(fn):
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# --------------------------------------------------------------------------
# kernel blocks


def np_kernel_block(X, Y, kind, param, degree, unsquared):
    if kind == LINEAR:
        return X @ Y.T
    if kind == POLYNOMIAL:
        return (X @ Y.T + param) ** degree
    sq = cdist(X, Y, "sqeuclidean")
    if unsquared:
        np.sqrt(sq, out=sq)
    sq *= -1.0 / (2.0 * param * param)
    return np.exp(sq, out=sq)


@_njit
def nb_kernel_block(X, Y, kind, param, degree, unsquared):
    m, d = X.shape
    p = Y.shape[0]
    out = np.empty((m, p))
    scale = -1.0 / (2.0 * param * param) if kind == RBF else 0.0
    for i in range(m):
        for j in range(p):
            acc = 0.0
            if kind == RBF:
                for t in range(d):
                    diff = X[i, t] - Y[j, t]
                    acc += diff * diff
                if unsquared:
                    acc = np.sqrt(acc)
                out[i, j] = np.exp(acc * scale)
            else:
                for t in range(d):
                    acc += X[i, t] * Y[j, t]
                if kind == POLYNOMIAL:
                    acc = (acc + param) ** degree
                out[i, j] = acc
    return out


def np_kernel_diag(X, kind, param, degree):
    if kind == RBF:
        return np.ones(X.shape[0])
    sq = np.einsum("ij,ij->i", X, X)
    if kind == POLYNOMIAL:
        return (sq + param) ** degree
    return sq


@_njit
def nb_kernel_diag(X, kind, param, degree):
    m, d = X.shape
    out = np.empty(m)
    for i in range(m):
        if kind == RBF:
            out[i] = 1.0
            continue
        acc = 0.0
        for t in range(d):
            acc += X[i, t] * X[i, t]
        if kind == POLYNOMIAL:
            acc = (acc + param) ** degree
        out[i] = acc
    return out


# --------------------------------------------------------------------------
# nearest-seed maintenance for D^z sampling


def np_min_update(best, owner, cand, label):
    closer = cand < best
    best[closer] = cand[closer]
    owner[closer] = label
    return int(closer.sum())


@_njit
def nb_min_update(best, owner, cand, label):
    moved = 0
    for i in range(best.shape[0]):
        if cand[i] < best[i]:
            best[i] = cand[i]
            owner[i] = label
            moved += 1
    return moved


# --------------------------------------------------------------------------
# costs of many point-center sets from one block of squared distances
#
# ``sq`` is (rows, cols); row m of ``sets`` lists the columns of center set m.
# Adds sum_r w[r] * min_j sq[r, sets[m, j]]^(z/2) into ``out[m]``.


def np_set_costs(sq, sets, w, z, out):
    nearest = sq[:, sets].min(axis=2)
    if z != 2:
        nearest = np.sqrt(nearest) ** z
    out += w @ nearest
    return out


@_njit
def nb_set_costs(sq, sets, w, z, out):
    m, k = sets.shape
    for r in range(sq.shape[0]):
        for s in range(m):
            best = np.inf
            for j in range(k):
                v = sq[r, sets[s, j]]
                if v < best:
                    best = v
            if z != 2.0:
                best = np.sqrt(best) ** z
            out[s] += w[r] * best
    return out


# --------------------------------------------------------------------------
# exhaustive k-partition search over a subset-cost table
#
# ``table[mask]`` is the cost of the block whose members are the set bits of
# ``mask``.  Partitions are enumerated as restricted growth strings with
# exactly ``k`` distinct labels.


def np_best_partition(table, s, k):
    labels = [0] * s
    best = np.inf
    best_labels = np.zeros(s, dtype=np.int64)
    masks = [0] * k

    def rec(pos, used):
        nonlocal best
        if s - pos < k - used:
            return
        if pos == s:
            total = 0.0
            for b in range(k):
                total += table[masks[b]]
            if total < best:
                best = total
                best_labels[:] = labels
            return
        bit = 1 << pos
        for b in range(min(used + 1, k)):
            labels[pos] = b
            masks[b] |= bit
            rec(pos + 1, max(used, b + 1))
            masks[b] ^= bit

    rec(0, 0)
    return best, best_labels


@_njit
def nb_best_partition(table, s, k):
    labels = np.zeros(s, dtype=np.int64)
    maxlab = np.zeros(s + 1, dtype=np.int64)  # labels used among positions < i
    best = np.inf
    best_labels = np.zeros(s, dtype=np.int64)
    masks = np.zeros(k, dtype=np.int64)
    # iterative odometer over restricted growth strings
    pos = 0
    labels[0] = -1
    while pos >= 0:
        if labels[pos] >= 0:
            masks[labels[pos]] ^= 1 << pos
        labels[pos] += 1
        limit = min(maxlab[pos] + 1, k)
        if labels[pos] >= limit:
            pos -= 1
            continue
        masks[labels[pos]] |= 1 << pos
        used = max(maxlab[pos], labels[pos] + 1)
        if s - pos - 1 < k - used:
            continue
        if pos == s - 1:
            total = 0.0
            for b in range(k):
                total += table[masks[b]]
            if total < best:
                best = total
                best_labels[:] = labels
            continue
        maxlab[pos + 1] = used
        pos += 1
        labels[pos] = -1
    return best, best_labels


def mixed_kernel_block(X, Y, kind, param, degree, unsquared):
    # cdist + vectorized exp beats the scalar loop for rbf
    if kind == RBF:
        return np_kernel_block(X, Y, kind, param, degree, unsquared)
    return nb_kernel_block(X, Y, kind, param, degree, unsquared)


if USE_NUMBA:
    kernel_block = mixed_kernel_block
    kernel_diag = nb_kernel_diag
    min_update = nb_min_update
    set_costs = nb_set_costs
    best_partition = nb_best_partition
else:
    kernel_block = np_kernel_block
    kernel_diag = np_kernel_diag
    min_update = np_min_update
    set_costs = np_set_costs
    best_partition = np_best_partition
