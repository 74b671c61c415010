import numpy as np
import pytest

from personet.casestudies import preset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ext_plan():
    return preset("extraversion")


@pytest.fixture(scope="session")
def agr_plan():
    return preset("agreeableness")


@pytest.fixture(scope="session")
def ext(ext_plan):
    return ext_plan.model


@pytest.fixture(scope="session")
def agr(agr_plan):
    return agr_plan.model


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
