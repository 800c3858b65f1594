import os
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from qprefine import GeneralQP, StandardQP  # noqa: E402

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"
MM_DIR = FIXTURES / "maros_meszaros"
TINY_RHS_QPS = FIXTURES / "tiny_rhs.qps"

MICRO = Fraction(1, 10**6)


def tiny_rhs_standard() -> StandardQP:
    """min 1/2 (x1^2 + x2^2) + x1 + (1 + 1e-6) x2  s.t.  x1 + x2 = 1e-6,  x >= 0."""
    return StandardQP.build(Q=[[1, 0], [0, 1]], A=[[1, 1]], c=[1, 1 + MICRO], b=[MICRO], l=[0, 0], u=[None, None])


def tiny_rhs_general() -> GeneralQP:
    return GeneralQP.build(
        Q=[[1, 0], [0, 1]],
        c=[1, 1 + MICRO],
        A=[[1, 1]],
        row_lower=[MICRO],
        row_upper=[MICRO],
        name="TINYRHS",
    )


@pytest.fixture
def tiny():
    return tiny_rhs_standard()


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
