import pytest
from hypothesis import settings

from capacity_rct.queueing import ModelParams

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def pilot_params():
    """Rates of the pilot-study scenarios."""
    return ModelParams(lam=0.4, tau=0.35, mu=3.0, p=0.1)


@pytest.fixture
def validation_params():
    """Rates of the simulation-validation study."""
    return ModelParams(lam=0.185, tau=0.16, mu=7.0, p=0.085)


@pytest.fixture
def figure4_params():
    return ModelParams(lam=0.3, tau=0.3, mu=3.0, p=0.5)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
