import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bose3body import Grid

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return Grid(20.0, 2048)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(20.0, 512)


def bandlimited(grid, coeffs, kmax_frac=0.25, seed=0):
    """Random smooth field: a few low Fourier modes times a Gaussian envelope."""
    rng = np.random.default_rng(seed)
    x = grid.x
    vals = np.zeros(grid.M, dtype=complex)
    for j, c in enumerate(coeffs):
        vals += c * np.exp(1j * (j + 1) * 0.3 * x + 1j * rng.uniform(0, 2 * np.pi))
    return vals * np.exp(-x**2 / 8)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
