from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from m1queue.paths import CadlagPath

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def step_paths(draw, T=2.0, max_jumps=6, allow_jump_at_T=False):
    k = draw(st.integers(0, max_jumps))
    hi = T if allow_jump_at_T else T * 0.999
    times = draw(
        st.lists(
            st.floats(0.01 * T, hi, allow_nan=False), min_size=k, max_size=k, unique=True
        ).map(sorted)
    )
    vals = draw(st.lists(st.floats(-3, 3, allow_nan=False), min_size=k, max_size=k))
    init = draw(st.floats(-3, 3, allow_nan=False))
    return CadlagPath.step(T, init, list(zip(times, vals)))


def random_step_path(rng: np.random.Generator, T=2.0, max_jumps=10, margin=0.05) -> CadlagPath:
    k = int(rng.integers(1, max_jumps + 1))
    t = np.sort(rng.uniform(margin * T, (1 - margin) * T, k))
    v = rng.normal(0.0, 1.0, k)
    return CadlagPath.step(T, float(rng.normal()), list(zip(t, v)))


def ramp(n: int, T: float = 2.0) -> CadlagPath:
    """Continuous path rising linearly from 0 to 1 on ``[1 - 1/n, 1]``."""
    return CadlagPath.pl(T, [(0.0, 0.0), (1 - 1 / n, 0.0), (1.0, 1.0), (T, 1.0)])


@pytest.fixture
def unit_step():
    return CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
