import pytest

from blowlab.scattering import (Degenerate, DerivativeBlowup, LogFamily, Unbounded,
                                build_profile)

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def standard():
    return build_profile(Unbounded(0.25))


@pytest.fixture(scope="session")
def zero():
    return build_profile(Degenerate())


@pytest.fixture(scope="session")
def wave():
    return build_profile(DerivativeBlowup(0, 0.3))


@pytest.fixture(scope="session")
def hier():
    return build_profile(DerivativeBlowup(2, 0.2))


@pytest.fixture(scope="session")
def logged():
    return build_profile(Unbounded(0.25), log=LogFamily((1,), (1.0,), 0))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
