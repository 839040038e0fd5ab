import itertools

import numpy as np
import pytest

from kcoreset import _hot


def poly_features(X, c, degree):
    """Explicit feature map of (<x, y> + c)^degree for degree 1 or 2."""
    X = np.atleast_2d(X)
    n, d = X.shape
    if degree == 1:
        return np.hstack([X, np.full((n, 1), np.sqrt(c))])
    assert degree == 2
    quad = np.stack([X[:, i] * X[:, j] for i, j in itertools.product(range(d), repeat=2)], axis=1)
    return np.hstack([quad, np.sqrt(2 * c) * X, np.full((n, 1), c)])


@pytest.fixture(params=["numba", "numpy"])
def hot_path(request, monkeypatch):
    """Run a test once per inner-loop flavour."""
    if request.param == "numpy":
        for name in ("kernel_block", "kernel_diag", "min_update", "set_costs", "best_partition"):
            monkeypatch.setattr(_hot, name, getattr(_hot, "np_" + name))
    else:
        if not _hot.HAS_NUMBA:
            pytest.skip("numba not installed")
        for name in ("kernel_block", "kernel_diag", "min_update", "set_costs", "best_partition"):
            monkeypatch.setattr(_hot, name, getattr(_hot, "nb_" + name))
    return request.param


def brute_partitions(s, k):
    """Every partition of range(s) into exactly k labelled-by-first-appearance blocks."""
    for labels in itertools.product(range(k), repeat=s):
        seen = []
        for lab in labels:
            if lab not in seen:
                seen.append(lab)
        if len(seen) == k and seen == list(range(k)):
            yield np.array(labels)
