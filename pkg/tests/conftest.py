import numpy as np
import pytest

from hypdelay.measure import HistorySegment, StieltjesMeasure
from hypdelay.transport import GridFunction, TransportSystem


@pytest.fixture
def decaying_channel():
    """v=1, k=-0.2 on [0, 1]."""
    return TransportSystem.uniform(1.0, [1.0], [-0.2])


def point_delay(gamma, r=0.5):
    return StieltjesMeasure.point_mass([[gamma]], -r)


def constant_data(sys, r, value=1.0, nodes=257, dt=1 / 256):
    v = np.full(sys.n, value)
    return GridFunction.constant(v, sys.ell, nodes), HistorySegment.constant(v, r, dt)


ACCEPTANCE_LINES: list[str] = []


def record(label: str, ok: bool, detail: str) -> None:
    """Print and keep one PASS/FAIL line for the acceptance summary."""
    line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
