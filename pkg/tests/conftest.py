import numpy as np
import pytest


def pytest_terminal_summary(terminalreporter):
    """Echo acceptance verdict lines even when output capture is on."""
    import sys

    mod = sys.modules.get("tests.test_acceptance") or sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def central_diff(f, arrays, eps=1e-6):
    """Central finite-difference gradients of scalar f w.r.t. each float64 array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            hi = f()
            flat[i] = keep - eps
            lo = f()
            flat[i] = keep
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


@pytest.fixture
def rng():
    return np.random.default_rng(0)
