import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _deterministic_numpy_errors():
    old = np.seterr(over="raise", invalid="raise")
    yield
    np.seterr(**old)


def central_diff_gradient(fun, x, step=None):
    """Independent finite-difference oracle: central differences per
    coordinate with the step tied to the point scale."""
    x = np.asarray(x, dtype=float)
    if step is None:
        step = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        grad[i] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return grad


def relative_error(approx, exact):
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(float(np.linalg.norm(exact)), 1e-12)
    return float(np.linalg.norm(approx - exact)) / denom
