"""Coresets for kernel (k, z)-clustering and the solvers built on them."""
from .coreset import (
    Coreset,
    SeedCenters,
    SensitivityProfile,
    build_coreset,
    dz_sampling,
    importance_sampling,
    load_coreset,
    merge_reduce_stream,
    save_coreset,
    sensitivities,
    uniform_coreset,
)
from .errors import (
    ConfigError,
    CoresetError,
    EvalError,
    IngestError,
    KCoresetError,
    KernelError,
    SolverError,
    SpectralError,
)
from .kernels import (
    Center,
    KernelOracle,
    KernelSpec,
    PointKernel,
    PrecomputedKernel,
    WeightedDataset,
    WeightedSet,
    center_sqdist,
    cost_z,
    kernel_distance,
    kernel_eval,
    make_oracle,
)

__version__ = "0.1.0"
