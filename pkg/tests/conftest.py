"""Shared fixtures and hypothesis profiles."""
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from copulapid.estimator import EstimatorConfig

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def fast_config():
    """A short training schedule for smoke tests (not for accuracy checks)."""
    return EstimatorConfig(A=10, M=64, iterations=60, window=20, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance criterion reporting -----------------------------------------------

CRITERIA_LINES = []


def report_criterion(capsys, number, passed, detail):
    """Print and remember one ``CRITERION n: PASS|FAIL`` line."""
    line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    CRITERIA_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
