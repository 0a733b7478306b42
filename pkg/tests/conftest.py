import sys

import numpy as np
import pytest

from sawtooth_qc.core import MapParams


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running physics checks")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_amps(rng, dim, cols=None):
    shape = (dim,) if cols is None else (dim, cols)
    a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return a / np.linalg.norm(a, axis=0)


def kron_single(n_q, q, gate):
    """Dense operator acting with ``gate`` on qubit q (qubit 0 = least significant bit)."""
    out = np.eye(1)
    for k in reversed(range(n_q)):
        out = np.kron(out, gate if k == q else np.eye(2))
    return out


def dft_matrix(dim, sign=+1):
    j = np.arange(dim)
    return np.exp(sign * 2j * np.pi * np.outer(j, j) / dim) / np.sqrt(dim)


@pytest.fixture(params=[2, 3, 4, 5])
def small_params(request):
    return MapParams(request.param)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(acc, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
