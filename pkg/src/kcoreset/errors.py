"""Exception hierarchy.  The CLI maps each class to its own exit code."""


class KCoresetError(Exception):
    exit_code = 1


class ConfigError(KCoresetError, ValueError):
    exit_code = 2


class IngestError(KCoresetError, ValueError):
    exit_code = 3


class KernelError(KCoresetError, ValueError):
    exit_code = 4


class CoresetError(KCoresetError, ValueError):
    exit_code = 5


class SolverError(KCoresetError, ValueError):
    exit_code = 6


class SpectralError(KCoresetError, ValueError):
    exit_code = 7


class EvalError(KCoresetError, ValueError):
    exit_code = 8
