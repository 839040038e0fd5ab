"""Coreset construction: D^z seeding, sensitivity sampling, the iterated
reduction loop, a uniform baseline and merge-and-reduce streaming."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import _hot
from .errors import CoresetError
from .kernels import KernelOracle, WeightedSet, point_sqdists

log = logging.getLogger(__name__)

DEFAULT_C0 = 0.05


@dataclass
class Coreset(WeightedSet):
    """Reweighted index subset.  ``indices`` are distinct."""

    source_distinct: int = -1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        if np.unique(self.indices).size != self.indices.size:
            raise CoresetError("coreset indices must be distinct")
        if not np.all(self.weights > 0):
            raise CoresetError("coreset weights must be positive")


@dataclass
class SeedCenters:
    indices: np.ndarray      # oracle indices of the seeds, in draw order
    assignment: np.ndarray   # per entry of X: position of its nearest seed
    distance: np.ndarray     # per entry of X: feature-space distance to that seed


@dataclass
class SensitivityProfile:
    sigma: np.ndarray
    p: np.ndarray


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def inverse_cdf_draws(rng: np.random.Generator, mass: np.ndarray, size: int) -> np.ndarray:
    """``size`` i.i.d. positions drawn with probability proportional to ``mass``.

    Binary search over the prefix-sum array; zero-mass entries are never drawn.
    """
    cdf = np.cumsum(mass)
    total = cdf[-1]
    if not total > 0:
        raise CoresetError("sampling mass is zero everywhere")
    pos = np.searchsorted(cdf, rng.random(size) * total, side="right")
    last = int(np.flatnonzero(mass > 0)[-1])
    return np.minimum(pos, last)


def aggregate(indices: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge repeated indices by summing their weights (sorted by index)."""
    uniq, inv = np.unique(indices, return_inverse=True)
    return uniq, np.bincount(inv.reshape(-1), weights=weights, minlength=uniq.size)


# --------------------------------------------------------------------------
# D^z sampling


def dz_sampling(oracle: KernelOracle, X: WeightedSet, k: int, z: float = 2.0, seed=None,
                first: str = "weighted") -> SeedCenters:
    """Pick ``k`` seeds, each next one with probability ~ w(x) * dist(x, seeds)^z.

    The first seed is drawn proportionally to weight (``first="uniform"``
    draws it uniformly over entries).  If every point already sits on a
    seed, the remaining seeds are uniform over the unchosen distinct points.
    """
    if k < 1:
        raise CoresetError(f"k must be >= 1, got {k}")
    if len(X) == 0:
        raise CoresetError("cannot seed an empty set")
    rng = _rng(seed)
    n = len(X)
    keys = oracle.keys[X.indices]

    if np.unique(keys).size < k:
        reps = oracle.representatives(X.indices)
        sq = point_sqdists(oracle, X.indices, reps)
        owner = np.argmin(sq, axis=1)
        return SeedCenters(reps, owner, np.sqrt(sq[np.arange(n), owner]))

    if first == "uniform":
        pos = int(rng.integers(n))
    else:
        pos = int(inverse_cdf_draws(rng, X.weights, 1)[0])
    chosen = [pos]
    best = point_sqdists(oracle, X.indices, X.indices[[pos]])[:, 0]
    owner = np.zeros(n, dtype=np.int64)

    for r in range(1, k):
        mass = X.weights * (best if z == 2 else np.sqrt(best) ** z)
        if mass.sum() > 0:
            pos = int(inverse_cdf_draws(rng, mass, 1)[0])
        else:
            taken = np.isin(keys, keys[chosen])
            cand = np.flatnonzero(~taken)
            _, first_of = np.unique(keys[cand], return_index=True)
            cand = cand[np.sort(first_of)]
            pos = int(cand[rng.integers(cand.size)])
        chosen.append(pos)
        col = point_sqdists(oracle, X.indices, X.indices[[pos]])[:, 0]
        _hot.min_update(best, owner, col, r)

    return SeedCenters(X.indices[chosen], owner, np.sqrt(best))


# --------------------------------------------------------------------------
# sensitivity sampling


def sensitivities(oracle: KernelOracle, X: WeightedSet, seeds: SeedCenters, z: float = 2.0) -> SensitivityProfile:
    w = X.weights
    dz = seeds.distance ** z
    cost = float(w @ dz)
    first = w * dz / cost if cost > 0 else np.zeros_like(w)
    cluster_w = np.bincount(seeds.assignment, weights=w, minlength=len(seeds.indices))
    assert np.all(cluster_w[seeds.assignment] > 0), "empty cluster in seed assignment"
    sigma = first + w / cluster_w[seeds.assignment]
    return SensitivityProfile(sigma, sigma / sigma.sum())


def importance_sampling(oracle: KernelOracle, X: WeightedSet, k: int, z: float, N: int, seed=None,
                        first: str = "weighted") -> Coreset:
    """One round of sensitivity sampling with ``N`` i.i.d. draws.

    A point drawn m times keeps a single entry of weight m * w(x) / (p_x N).
    """
    if N < 1:
        raise CoresetError(f"sample count must be >= 1, got {N}")
    rng = _rng(seed)
    seeds = dz_sampling(oracle, X, k, z, rng, first=first)
    prof = sensitivities(oracle, X, seeds, z)
    assert prof.sigma.sum() > 0
    draws = inverse_cdf_draws(rng, prof.p, N)
    pos, counts = np.unique(draws, return_counts=True)
    weights = counts * X.weights[pos] / (prof.p[pos] * N)
    idx, weights = aggregate(X.indices[pos], weights)
    return Coreset(idx, weights, source_distinct=oracle.distinct_count(X.indices))


def iterated_log(n: float, times: int) -> float:
    """log2 applied ``times`` times to ``n``, floored at 1."""
    v = float(n)
    for _ in range(times):
        v = math.log2(max(v, 2.0))
    return max(v, 1.0)


def sample_count(epsilon: float, k: int, z: float, distinct: int, c0: float = DEFAULT_C0) -> int:
    """C0 * eps^-4 * 2^(2z) * z * k^2 * log^2(k+1) * log2(max(2, distinct))."""
    n = c0 * epsilon ** -4 * 2 ** (2 * z) * z * k * k * math.log2(k + 1) ** 2 * math.log2(max(2, distinct))
    return max(1, int(math.ceil(n)))


def _as_coreset(oracle: KernelOracle, X: WeightedSet) -> Coreset:
    idx, w = aggregate(X.indices, X.weights)
    return Coreset(idx, w, source_distinct=oracle.distinct_count(X.indices))


def build_coreset(oracle: KernelOracle, X: WeightedSet, k: int = 5, z: float = 2.0, epsilon: float = 0.5,
                  mode: str = "single", N: int | None = None, seed=None, c0: float = DEFAULT_C0,
                  first: str = "weighted") -> Coreset:
    """Coreset of ``X``.

    ``single`` runs one sensitivity-sampling round with ``N`` draws (or the
    formula count for ``epsilon``).  ``iterated`` repeats rounds with a
    shrinking per-round accuracy until the number of distinct elements stops
    decreasing.  Inputs that already have at most ``N`` distinct elements
    come back unchanged.
    """
    if not 0 < epsilon < 1:
        raise CoresetError(f"epsilon must lie in (0, 1), got {epsilon}")
    if mode not in ("single", "iterated"):
        raise CoresetError(f"unknown mode {mode!r}")
    rng = _rng(seed)
    distinct = oracle.distinct_count(X.indices)

    if mode == "single":
        count = N if N is not None else sample_count(epsilon, k, z, distinct, c0)
        if distinct <= count:
            out = _as_coreset(oracle, X)
        else:
            out = importance_sampling(oracle, X, k, z, count, rng, first=first)
        out.meta.update(mode="single", N=int(count), rounds=int(distinct > count))
        return out

    current = _as_coreset(oracle, X)
    prev_distinct = distinct
    rounds = 0
    while True:
        eps_i = epsilon / iterated_log(distinct, rounds + 1) ** 0.25
        count = N if N is not None else sample_count(eps_i, k, z, prev_distinct, c0)
        if prev_distinct <= count:
            break
        nxt = importance_sampling(oracle, current, k, z, count, rng, first=first)
        rounds += 1
        nxt_distinct = oracle.distinct_count(nxt.indices)
        log.debug("round %d: eps=%.4g N=%d distinct %d -> %d", rounds, eps_i, count, prev_distinct, nxt_distinct)
        if nxt_distinct >= prev_distinct:
            break
        current, prev_distinct = nxt, nxt_distinct
    current.source_distinct = distinct
    current.meta.update(mode="iterated", rounds=rounds)
    return current


def uniform_coreset(X: WeightedSet, N: int, seed=None, oracle: KernelOracle | None = None) -> Coreset:
    """``N`` uniform draws over entries; a point drawn m times weighs m * w(x) * n / N."""
    if N < 1:
        raise CoresetError(f"sample count must be >= 1, got {N}")
    n = len(X)
    draws = _rng(seed).integers(0, n, size=N)
    pos, counts = np.unique(draws, return_counts=True)
    idx, weights = aggregate(X.indices[pos], counts * X.weights[pos] * (n / N))
    src = oracle.distinct_count(X.indices) if oracle is not None else -1
    return Coreset(idx, weights, source_distinct=src)


# --------------------------------------------------------------------------
# streaming


@dataclass
class _Bucket:
    ids: np.ndarray      # global stream positions
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return self.ids.size


def _concat(parts: list[_Bucket]) -> _Bucket:
    return _Bucket(np.concatenate([p.ids for p in parts]),
                   np.concatenate([p.points for p in parts]),
                   np.concatenate([p.weights for p in parts]))


def merge_reduce_stream(oracle_factory: Callable[[np.ndarray], KernelOracle], stream: Iterable,
                        k: int = 5, z: float = 2.0, N_per_bucket: int = 1000, bucket_size: int | None = None,
                        seed=None) -> Coreset:
    """Insertion-only streaming coreset via a binary merge-and-reduce tree.

    ``stream`` yields point rows, or ``(row, weight)`` pairs.  Full buffers
    are reduced to ``N_per_bucket`` entries; two reductions on the same level
    are united and reduced again one level up.  The result indexes stream
    positions.  ``meta["peak_retained"]`` records the largest number of
    points held at once.
    """
    bucket_size = 4 * N_per_bucket if bucket_size is None else bucket_size
    if bucket_size < N_per_bucket:
        raise CoresetError("bucket_size must be >= N_per_bucket")
    seeds = np.random.SeedSequence(seed)

    def reduce(b: _Bucket, rng) -> _Bucket:
        oracle = oracle_factory(b.points)
        cs = build_coreset(oracle, WeightedSet(np.arange(len(b)), b.weights), k, z, N=N_per_bucket, seed=rng)
        return _Bucket(b.ids[cs.indices], b.points[cs.indices], cs.weights)

    levels: list[_Bucket | None] = []
    rows: list[np.ndarray] = []
    row_w: list[float] = []
    seen = 0
    peak = 0

    def held():
        return len(rows) + sum(len(b) for b in levels if b is not None)

    def flush():
        nonlocal rows, row_w
        b = _Bucket(np.arange(seen - len(rows), seen), np.asarray(rows, dtype=np.float64).reshape(len(rows), -1),
                    np.asarray(row_w))
        rows, row_w = [], []
        carry = reduce(b, seeds.spawn(1)[0])
        lvl = 0
        while lvl < len(levels) and levels[lvl] is not None:
            carry = reduce(_concat([levels[lvl], carry]), seeds.spawn(1)[0])
            levels[lvl] = None
            lvl += 1
        if lvl == len(levels):
            levels.append(None)
        levels[lvl] = carry

    for item in stream:
        if isinstance(item, tuple):
            row, wt = item
        else:
            row, wt = item, 1.0
        rows.append(np.asarray(row, dtype=np.float64).reshape(-1))
        row_w.append(float(wt))
        seen += 1
        peak = max(peak, held())
        if len(rows) == bucket_size:
            flush()
            peak = max(peak, held())

    if seen == 0:
        raise CoresetError("stream is empty")
    parts = [b for b in reversed(levels) if b is not None]
    if rows:
        parts.append(_Bucket(np.arange(seen - len(rows), seen), np.asarray(rows, dtype=np.float64),
                             np.asarray(row_w)))
    union = _concat(parts)
    oracle = oracle_factory(union.points)
    cs = build_coreset(oracle, WeightedSet(np.arange(len(union)), union.weights), k, z, N=N_per_bucket, seed=seed)
    ids, weights = aggregate(union.ids[cs.indices], cs.weights)
    return Coreset(ids, weights, source_distinct=-1,
                   meta={"mode": "stream", "N": N_per_bucket, "bucket_size": bucket_size,
                         "stream_length": seen, "levels": len(levels), "peak_retained": peak})


# --------------------------------------------------------------------------
# serialization


def save_coreset(coreset: Coreset, csv_path, sidecar: dict | None = None) -> Path:
    """Write ``index,weight`` rows plus a JSON sidecar next to ``csv_path``."""
    csv_path = Path(csv_path)
    with open(csv_path, "w") as fh:
        fh.write("index,weight\n")
        for i, w in zip(coreset.indices.tolist(), coreset.weights.tolist()):
            fh.write(f"{i},{w!r}\n")
    meta = {"source_distinct": coreset.source_distinct, "size": len(coreset), **coreset.meta, **(sidecar or {})}
    json_path = csv_path.with_suffix(".json")
    json_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return json_path


def load_coreset(csv_path) -> Coreset:
    csv_path = Path(csv_path)
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    meta = {}
    json_path = csv_path.with_suffix(".json")
    if json_path.exists():
        meta = json.loads(json_path.read_text())
    return Coreset(data[:, 0].astype(np.int64), data[:, 1], source_distinct=int(meta.pop("source_distinct", -1)),
                   meta=meta)
