"""Command-line front-end.

    kcoreset build      DATA [options]   -> coreset.csv + coreset.json
    kcoreset eval-error DATA [options]   -> error_report.csv + error_report.json
    kcoreset solve      DATA [options]   -> solution.json + assignment.csv
    kcoreset spectral   SIM  [options]   -> partition.csv + spectral_metrics.json
    kcoreset stream     DATA [options]   -> coreset.csv + coreset.json

Every command also writes manifest.json and prints a one-line JSON summary.
Settings resolve as command-line flag, then ``--config`` JSON file, then the
built-in default.  ``KCORESET_OUTPUT_DIR`` overrides the default output dir.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .coreset import build_coreset, merge_reduce_stream, save_coreset
from .errors import ConfigError, KCoresetError
from .evalharness import BUILDERS, empirical_error
from .io import blob_hash, ingest, load_matrix, write_json
from .kernels import KernelSpec, PointKernel, WeightedSet, make_oracle
from .solver import evaluate_on_full, solve
from .spectral import similarity_from_matrix, spectral_cluster

log = logging.getLogger("kcoreset")

COMMANDS = ("build", "eval-error", "solve", "spectral", "stream")


@dataclass
class RunConfig:
    data: str = ""
    weighted: bool = False
    subsample: int | None = None
    kernel: str = "rbf"
    sigma: float = 1.0
    c: float = 0.0
    degree: int = 2
    rbf_unsquared: bool = False
    kernel_matrix: str | None = None
    k: int = 5
    z: float = 2.0
    N: int | None = None
    epsilon: float = 0.5
    mode: str = "single"
    c0: float = 0.05
    seed: int = 0
    out: str | None = None
    threads: int | None = None
    # eval-error
    builder: str = "importance"
    num_center_sets: int = 500
    num_repetitions: int = 100
    fixed_centers: bool = False
    # solve
    lloyd: bool = True
    max_iters: int = 100
    # stream
    bucket_size: int | None = None
    # spectral
    induce_kernel: bool = False
    degree_sample_size: int = 1000
    exact_degrees: bool = False
    spectral_N: int = 2000

    def validate(self, command: str):
        if not self.data:
            raise ConfigError("no input file given")
        if self.kernel not in ("rbf", "polynomial", "linear", "precomputed"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "precomputed" and not self.kernel_matrix:
            raise ConfigError("--kernel precomputed needs --kernel-matrix")
        if self.kernel == "rbf" and not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if self.kernel == "polynomial" and (self.degree < 1 or self.c < 0):
            raise ConfigError("polynomial kernel needs degree >= 1 and c >= 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.z < 1:
            raise ConfigError("z must be >= 1")
        if self.N is not None and self.N < 1:
            raise ConfigError("N must be >= 1")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.mode not in ("single", "iterated"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.subsample is not None and self.subsample < 1:
            raise ConfigError("subsample must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if command == "eval-error":
            if self.builder not in BUILDERS:
                raise ConfigError(f"unknown builder {self.builder!r}")
            if self.num_center_sets < 1 or self.num_repetitions < 1:
                raise ConfigError("num_center_sets and num_repetitions must be >= 1")
        if command == "solve" and self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if command == "stream":
            if self.kernel == "precomputed":
                raise ConfigError("stream needs an analytic kernel over points")
            n_per = self.N or 1000
            if self.bucket_size is not None and self.bucket_size < n_per:
                raise ConfigError("bucket_size must be >= N")
        if command == "spectral":
            if self.k < 2:
                raise ConfigError("spectral clustering needs k >= 2")
            if self.degree_sample_size < 1 or self.spectral_N < 1:
                raise ConfigError("degree_sample_size and N must be >= 1")

    def kernel_spec(self) -> KernelSpec:
        if self.kernel == "precomputed":
            return KernelSpec("precomputed", matrix=load_matrix(self.kernel_matrix))
        return KernelSpec(self.kernel, sigma=self.sigma, c=self.c, degree=self.degree,
                          rbf_unsquared=self.rbf_unsquared)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False, argument_default=S)
    common.add_argument("data", help="dataset CSV (spectral: similarity matrix, .npy or CSV)")
    common.add_argument("--config", help="JSON file of settings")
    common.add_argument("--weighted", action="store_true", help="last CSV column is the point weight")
    common.add_argument("--subsample", type=int, help="keep this many rows, uniformly at random")
    common.add_argument("--kernel", choices=["rbf", "polynomial", "linear", "precomputed"])
    common.add_argument("--sigma", type=float, help="rbf bandwidth")
    common.add_argument("--c", type=float, help="polynomial offset")
    common.add_argument("--degree", type=int, help="polynomial degree")
    common.add_argument("--rbf-unsquared", action="store_true", help="exp(-||x-y|| / 2 sigma^2)")
    common.add_argument("--kernel-matrix", help="precomputed kernel matrix (.npy or CSV)")
    common.add_argument("-k", type=int, help="number of clusters")
    common.add_argument("-z", type=float, help="distance exponent")
    common.add_argument("-N", type=int, help="coreset size")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--mode", choices=["single", "iterated"])
    common.add_argument("--c0", type=float, help="constant of the iterated-mode sample count")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="cap on worker threads; 1 is bit-reproducible")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kcoreset", description="Coresets for kernel (k, z)-clustering")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], argument_default=S, help="build a coreset")
    p = sub.add_parser("eval-error", parents=[common], argument_default=S, help="empirical coreset error")
    p.add_argument("--builder", choices=sorted(BUILDERS))
    p.add_argument("--num-center-sets", type=int)
    p.add_argument("--num-repetitions", type=int)
    p.add_argument("--fixed-centers", action="store_true", help="reuse one draw of center sets")
    p = sub.add_parser("solve", parents=[common], argument_default=S, help="kernel k-means++ (+ Lloyd) on a coreset")
    p.add_argument("--no-lloyd", dest="lloyd", action="store_false", help="stop after seeding")
    p.add_argument("--max-iters", type=int)
    p = sub.add_parser("spectral", parents=[common], argument_default=S, help="spectral clustering via kernel k-means")
    p.add_argument("--induce-kernel", action="store_true", help="DATA is a dataset; similarity = kernel")
    p.add_argument("--degree-sample-size", type=int)
    p.add_argument("--exact-degrees", action="store_true")
    p = sub.add_parser("stream", parents=[common], argument_default=S, help="merge-and-reduce over the file as a stream")
    p.add_argument("--bucket-size", type=int)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(loaded) - set(_FIELD_TYPES)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for key, val in vars(args).items():
        if key in _FIELD_TYPES:
            values[key] = val
    if args.command == "spectral":
        if "N" in values:
            values["spectral_N"] = values["N"]
    cfg = RunConfig(**values)
    if cfg.out is None:
        cfg.out = os.environ.get("KCORESET_OUTPUT_DIR", ".")
    return cfg


def _limit_threads(n: int | None):
    if n is None:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return None
    return threadpool_limits(limits=n)


def _summary(command: str, payload: dict) -> str:
    return json.dumps({"command": command, **payload}, sort_keys=True, default=float)


def run(command: str, cfg: RunConfig) -> dict:
    """Execute ``command``; returns the summary dict (also written to the manifest)."""
    cfg.validate(command)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {cfg.data: blob_hash(cfg.data)}
    if cfg.kernel_matrix:
        inputs[cfg.kernel_matrix] = blob_hash(cfg.kernel_matrix)

    if command == "spectral":
        summary = _run_spectral(cfg, out)
    else:
        ds = ingest(cfg.data, cfg.weighted, cfg.subsample, cfg.seed)
        spec = cfg.kernel_spec()
        if command == "stream":
            summary = _run_stream(cfg, out, ds, spec)
        else:
            oracle = make_oracle(spec, ds.points)
            if oracle.n != len(ds):
                raise ConfigError(f"kernel matrix has {oracle.n} rows but dataset has {len(ds)}")
            X = WeightedSet(np.arange(len(ds)), ds.weights)
            summary = {"build": _run_build, "eval-error": _run_eval, "solve": _run_solve}[command](
                cfg, out, oracle, X, spec)

    manifest = {"command": command, "version": __version__, "config": asdict(cfg), "inputs": inputs,
                "summary": summary}
    write_json(out / "manifest.json", manifest)
    return summary


def _sidecar(cfg: RunConfig, spec: KernelSpec) -> dict:
    return {"k": cfg.k, "z": cfg.z, "seed": cfg.seed, "kernel": spec.to_dict(), "epsilon": cfg.epsilon}


def _run_build(cfg, out, oracle, X, spec):
    distinct = oracle.distinct_count()
    if cfg.N is not None and cfg.N >= distinct:
        log.warning("N=%d >= %d distinct points; the dataset is its own coreset", cfg.N, distinct)
    t0 = time.perf_counter()
    cs = build_coreset(oracle, X, cfg.k, cfg.z, cfg.epsilon, cfg.mode, cfg.N, cfg.seed, cfg.c0)
    elapsed = time.perf_counter() - t0
    save_coreset(cs, out / "coreset.csv", {**_sidecar(cfg, spec), "N_requested": cfg.N})
    return {"size": len(cs), "source_distinct": cs.source_distinct, "total_weight": cs.total_weight,
            "mode": cfg.mode, "seconds": elapsed, "output": str(out / "coreset.csv")}


def _run_eval(cfg, out, oracle, X, spec):
    N = cfg.N if cfg.N is not None else 1000
    rep = empirical_error(oracle, X, cfg.builder, N, cfg.k, cfg.num_center_sets, cfg.num_repetitions,
                          cfg.seed, cfg.z, cfg.fixed_centers)
    rep.write(out / "error_report.csv")
    return rep.summary()


def _run_solve(cfg, out, oracle, X, spec):
    t0 = time.perf_counter()
    if cfg.N is not None:
        S = build_coreset(oracle, X, cfg.k, 2.0, cfg.epsilon, cfg.mode, cfg.N, cfg.seed, cfg.c0)
    else:
        S = X
    t1 = time.perf_counter()
    sol = solve(oracle, S, cfg.k, cfg.seed, cfg.max_iters, cfg.lloyd)
    t2 = time.perf_counter()
    objective, assignment = evaluate_on_full(oracle, X, sol)
    t3 = time.perf_counter()
    timings = {"coreset": t1 - t0, **sol.meta.get("timings", {}), "full_evaluation": t3 - t2}
    doc = {**sol.to_dict(), "coreset_objective": sol.objective, "objective": objective, "seed": cfg.seed,
           "timings": timings, "coreset_size": len(S), "kernel": spec.to_dict()}
    write_json(out / "solution.json", doc)
    _write_assignment(out / "assignment.csv", assignment, "cluster")
    return {"objective": objective, "coreset_size": len(S), "iterations": sol.iterations, "timings": timings}


def _run_stream(cfg, out, ds, spec):
    N = cfg.N if cfg.N is not None else 1000

    def factory(points):
        return PointKernel(points, spec)

    rows = zip(ds.points, ds.weights.tolist()) if cfg.weighted else iter(ds.points)
    t0 = time.perf_counter()
    cs = merge_reduce_stream(factory, rows, cfg.k, cfg.z, N, cfg.bucket_size, cfg.seed)
    elapsed = time.perf_counter() - t0
    save_coreset(cs, out / "coreset.csv", _sidecar(cfg, spec))
    return {"size": len(cs), "total_weight": cs.total_weight, "peak_retained": cs.meta["peak_retained"],
            "seconds": elapsed, "output": str(out / "coreset.csv")}


def _run_spectral(cfg, out):
    if cfg.induce_kernel:
        ds = ingest(cfg.data, cfg.weighted, cfg.subsample, cfg.seed)
        A = make_oracle(cfg.kernel_spec(), ds.points)
    else:
        A = similarity_from_matrix(load_matrix(cfg.data))
    sample = None if cfg.exact_degrees else cfg.degree_sample_size
    res = spectral_cluster(A, cfg.k, cfg.spectral_N, sample, cfg.seed)
    _write_assignment(out / "partition.csv", res.assignment, "cluster")
    metrics = res.metrics()
    write_json(out / "spectral_metrics.json", metrics)
    return metrics


def _write_assignment(path: Path, assignment, column: str):
    with open(path, "w") as fh:
        fh.write(f"index,{column}\n")
        for i, a in enumerate(np.asarray(assignment).tolist()):
            fh.write(f"{i},{a}\n")


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        with _limit_threads(cfg.threads) or nullcontext():
            summary = run(args.command, cfg)
    except KCoresetError as exc:
        print(f"kcoreset {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(_summary(args.command, summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
