import numpy as np
import pytest
from hypothesis import settings

from acflow.profile import build_profile

# numba compilation on first use makes wall-clock deadlines meaningless
settings.register_profile("acflow", deadline=None)
settings.load_profile("acflow")


@pytest.fixture(scope="session")
def profile():
    return build_profile()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def report_criterion(number, ok, detail):
    verdict = "INFO" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {number:>3}: {verdict}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=float):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
