import numpy as np
import pytest

from powersched import NetworkInstance, RateCurve

# (criterion, verdict, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, verdict, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"criterion {number}: {verdict}  {detail}")


@pytest.fixture
def curve():
    return RateCurve()


def make_instance(a, b=None, noise=1.0, max_power=100.0, cst=1e9):
    """Instance from plain gain lists; ``b`` defaults to no carrier coupling."""
    a = np.asarray(a, dtype=float)
    b = np.zeros_like(a) if b is None else np.asarray(b, dtype=float)
    return NetworkInstance(a, b, noise, max_power, cst)
