import numpy as np
import pytest
from hypothesis import settings

from stabplan.workbench.fixtures import five_bus, ieee39, two_bus

settings.register_profile("ci", derandomize=True, deadline=None, max_examples=40)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def sys2():
    return two_bus()


@pytest.fixture(scope="session")
def sys5():
    return five_bus()


@pytest.fixture(scope="session")
def sys39():
    return ieee39()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- one PASS/FAIL line per acceptance criterion in the terminal summary --------

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _ACCEPTANCE.append(report)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for rep in _ACCEPTANCE:
        name = rep.nodeid.split("::")[-1].removeprefix("test_")
        detail = dict(rep.user_properties).get("detail", "")
        terminalreporter.write_line(f"{'PASS' if rep.passed else 'FAIL'}  {name}  {detail}")
