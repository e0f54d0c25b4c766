import os
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from distlll.core import binary_variable

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

HALF = Fraction(1, 2)


def fair(n, start=0, host=0):
    return [binary_variable(i, HALF, host=host) for i in range(start, start + n)]


@pytest.fixture
def fair_vars():
    return fair


_ACCEPTANCE: list = []


@pytest.fixture
def verdict(capsys):
    """Print ``PASS``/``FAIL`` for an acceptance criterion, then assert it."""

    def emit(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f" — {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
