import numpy as np
import pytest

from predictorlab import SimConfig, catalog_get, run_closed_loop

# one "PASS/FAIL criterion N: detail" line per acceptance criterion,
# printed in the terminal summary so it survives output capturing
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def example4():
    return catalog_get("example4")


@pytest.fixture(scope="session")
def nominal_trace():
    return run_closed_loop(SimConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
