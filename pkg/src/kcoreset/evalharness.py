"""Empirical coreset error against random center sets, and solver timing."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import _hot
from .coreset import Coreset, build_coreset, uniform_coreset
from .errors import EvalError
from .kernels import KernelOracle, WeightedSet, point_sqdists
from .solver import evaluate_on_full, solve

log = logging.getLogger(__name__)

# upper bound on floats held by one distance block
_BLOCK_FLOATS = 1 << 23
VANILLA_GUARD = 20_000

Builder = Callable[[KernelOracle, WeightedSet, int, int, np.random.Generator], Coreset]


def importance_builder(oracle, X, N, k, rng):
    return build_coreset(oracle, X, k, 2.0, N=N, seed=rng)


def uniform_builder(oracle, X, N, k, rng):
    return uniform_coreset(X, N, rng, oracle=oracle)


def identity_builder(oracle, X, N, k, rng):
    return Coreset(X.indices.copy(), X.weights.copy(), source_distinct=oracle.distinct_count(X.indices))


BUILDERS: dict[str, Builder] = {
    "importance": importance_builder,
    "uniform": uniform_builder,
    "identity": identity_builder,
}


def draw_center_sets(X: WeightedSet, k: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` sets of ``k`` distinct entries of ``X``, as oracle indices, shape (count, k)."""
    if k > len(X):
        raise EvalError(f"cannot draw {k} distinct centers from {len(X)} points")
    return np.stack([X.indices[rng.choice(len(X), size=k, replace=False)] for _ in range(count)])


def costs_for_center_sets(oracle: KernelOracle, X: WeightedSet, sets: np.ndarray, z: float = 2.0) -> np.ndarray:
    """cost_z(X, C) for every row C of ``sets`` (point centers only)."""
    m, k = sets.shape
    cols, inv = np.unique(sets.ravel(), return_inverse=True)
    inv = inv.reshape(m, k).astype(np.int64)
    out = np.zeros(m)
    step = max(1, _BLOCK_FLOATS // max(1, cols.size))
    for lo in range(0, len(X), step):
        rows = X.indices[lo:lo + step]
        sq = point_sqdists(oracle, rows, cols)
        _hot.set_costs(sq, inv, X.weights[lo:lo + step], float(z), out)
    return out


@dataclass
class ErrorReport:
    N: int
    errors: np.ndarray
    num_center_sets: int
    num_repetitions: int
    seed: int | None
    builder: str = ""
    coreset_sizes: list[int] = field(default_factory=list)
    skipped: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.errors))

    @property
    def min(self) -> float:
        return float(np.min(self.errors))

    @property
    def max(self) -> float:
        return float(np.max(self.errors))

    @property
    def std(self) -> float:
        return float(np.std(self.errors))

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    def summary(self) -> dict:
        return {
            "builder": self.builder, "N": self.N, "mean": self.mean, "median": self.median,
            "min": self.min, "max": self.max, "std": self.std,
            "num_center_sets": self.num_center_sets, "num_repetitions": self.num_repetitions,
            "seed": self.seed, "skipped_center_sets": self.skipped,
        }

    def write(self, csv_path) -> Path:
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["repetition", "error", "coreset_size"])
            for r, (e, s) in enumerate(zip(self.errors.tolist(), self.coreset_sizes)):
                wr.writerow([r, repr(e), s])
        json_path = csv_path.with_suffix(".json")
        json_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return json_path


def empirical_error(oracle: KernelOracle, X: WeightedSet, builder: Builder | str = "importance", N: int = 1000,
                    k: int = 5, num_center_sets: int = 500, num_repetitions: int = 100, seed: int | None = 0,
                    z: float = 2.0, fixed_centers: bool = False) -> ErrorReport:
    """Max relative cost error of fresh coresets over random center sets.

    Every repetition builds a new coreset and (unless ``fixed_centers``)
    draws new center sets of ``k`` distinct data points.
    """
    if num_center_sets < 1 or num_repetitions < 1:
        raise EvalError("num_center_sets and num_repetitions must be >= 1")
    name = builder if isinstance(builder, str) else getattr(builder, "__name__", "custom")
    if isinstance(builder, str):
        if builder not in BUILDERS:
            raise EvalError(f"unknown builder {builder!r}")
        builder = BUILDERS[builder]
    children = np.random.SeedSequence(seed).spawn(num_repetitions + 1)

    fixed = None
    if fixed_centers:
        rng = np.random.default_rng(children[-1])
        sets = draw_center_sets(X, k, num_center_sets, rng)
        fixed = (sets, costs_for_center_sets(oracle, X, sets, z))

    errors, sizes, skipped = [], [], 0
    for r in range(num_repetitions):
        rng = np.random.default_rng(children[r])
        cs = builder(oracle, X, N, k, rng)
        if fixed is None:
            sets = draw_center_sets(X, k, num_center_sets, rng)
            full = costs_for_center_sets(oracle, X, sets, z)
        else:
            sets, full = fixed
        ok = full > 0
        if not np.all(ok):
            skipped += int((~ok).sum())
            log.warning("skipping %d center sets with zero cost on the full data", int((~ok).sum()))
        if not np.any(ok):
            raise EvalError("every center set has zero cost; data is degenerate")
        approx = costs_for_center_sets(oracle, cs, sets[ok], z)
        errors.append(float(np.max(np.abs(approx - full[ok]) / full[ok])))
        sizes.append(len(cs))
    return ErrorReport(N, np.asarray(errors), num_center_sets, num_repetitions, seed, name, sizes, skipped)


def speedup_report(oracle: KernelOracle, X: WeightedSet, k: int, coreset_sizes, seed: int | None = 0,
                   runs: int = 10, lloyd: bool = True, vanilla_guard: int = VANILLA_GUARD) -> list[dict]:
    """Wall time and best objective of coreset-based vs plain kernel k-means++.

    One row per coreset size plus a ``vanilla`` row when ``len(X)`` is within
    ``vanilla_guard``.  Objectives are always measured on the full data.
    """
    sizes = sorted(int(s) for s in coreset_sizes)
    if sizes and sizes[0] < k:
        raise EvalError("coreset sizes must be >= k")
    state = np.random.SeedSequence(seed).generate_state(2 * runs)
    build_seeds, solve_seeds = state[:runs], state[runs:]

    rows = []
    vanilla_best = None
    if len(X) <= vanilla_guard:
        times, objs = [], []
        for r in range(runs):
            t0 = time.perf_counter()
            sol = solve(oracle, X, k, int(solve_seeds[r]), lloyd=lloyd)
            times.append(time.perf_counter() - t0)
            objs.append(sol.objective)
        vanilla_best = min(objs)
        rows.append({"method": "vanilla", "N": len(X), "mean_time": float(np.mean(times)),
                     "min_objective": vanilla_best, "relative_error": 0.0})
    else:
        log.warning("n=%d exceeds the vanilla guard %d; reporting coreset runs only", len(X), vanilla_guard)

    for N in sizes:
        times, objs = [], []
        for r in range(runs):
            t0 = time.perf_counter()
            cs = build_coreset(oracle, X, k, 2.0, N=N, seed=int(build_seeds[r]))
            sol = solve(oracle, cs, k, int(solve_seeds[r]), lloyd=lloyd)
            obj, _ = evaluate_on_full(oracle, X, sol)
            times.append(time.perf_counter() - t0)
            objs.append(obj)
        best = min(objs)
        rel = None if vanilla_best is None else (best - vanilla_best) / vanilla_best
        rows.append({"method": "coreset", "N": N, "mean_time": float(np.mean(times)),
                     "min_objective": best, "relative_error": rel})
    return rows
