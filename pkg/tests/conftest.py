import numpy as np
import pytest

from singular_pnp.grid import Grid
from singular_pnp.weights import WeightField, prepare_weights

S1_CHARGES = [(0.375, 0.5, 0.5), (0.625, 0.5, -0.5)]
S1_GAUSS = {"c_n": ((0.4, 0.6), 0.1, 0.33), "c_p": ((0.6, 0.4), 0.1, 0.33)}


def gaussian(grid, center, width, amp):
    X, Y = grid.centers
    return amp * np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2 * width ** 2))


def s1_initial_fields(grid, scale=1.0):
    return (scale * gaussian(grid, *S1_GAUSS["c_n"]), scale * gaussian(grid, *S1_GAUSS["c_p"]))


@pytest.fixture(scope="session")
def s1_weights_32():
    return prepare_weights(S1_CHARGES, 0.0, Grid(32, 32))


@pytest.fixture(scope="session")
def unit_weights_16():
    return WeightField.unit(Grid(16, 16))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
