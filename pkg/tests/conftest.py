import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bubbleflow import make_dimension, make_radial_grid

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def dim3():
    return make_dimension(3)


@pytest.fixture
def grid():
    return make_radial_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def record(number, title, checks, elapsed, limit=None):
        failed = [name for name, ok in checks.items() if not ok]
        if limit is not None and elapsed >= limit:
            failed.append(f"runtime {elapsed:.1f}s >= {limit:g}s")
        budget = f"{elapsed:.3f}s" + (f" < {limit:g}s" if limit is not None else "")
        status = "FAIL" if failed else "PASS"
        line = f"{status} criterion {number:2d}: {title} [{budget}]"
        if failed:
            line += " failed: " + "; ".join(failed)
        lines.append(line)
        print(line)
        assert not failed, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
