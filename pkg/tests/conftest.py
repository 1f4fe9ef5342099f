from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from srqda.model import SpikedCovarianceSpec, make_orthonormal_directions

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def single_spike_spec(p: int, lam: float, sigma_sq: float = 1.0, seed: int = 0,
                      mean=None) -> SpikedCovarianceSpec:
    v = make_orthonormal_directions(p, 1, seed)
    up, lo = ((lam,), ()) if lam > 0 else ((), (lam,))
    mu = np.zeros(p) if mean is None else mean
    return SpikedCovarianceSpec(sigma_sq, up, lo, v, mu)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
