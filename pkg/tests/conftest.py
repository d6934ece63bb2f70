from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_grid(rng, n):
    """Sorted random grid on [0, 1] starting at 0."""
    from roughpower.increments import TimeGrid

    t = np.sort(rng.uniform(0, 1, n - 1))
    return TimeGrid(np.concatenate([[0.0], t]), 1.0)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; printed at the end of the run."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}"
        request.config.stash[ACCEPTANCE].append((number, line))
        print(line)
        return ok

    return record
