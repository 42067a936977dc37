import pytest

from cylflow import Interval, StarShaped, build_geometry

from _util import PEANUT


@pytest.fixture(scope="session")
def disk16():
    return build_geometry(StarShaped((1.0,), nr=16))


@pytest.fixture(scope="session")
def peanut16():
    return build_geometry(StarShaped(PEANUT, nr=16))


@pytest.fixture(scope="session")
def line201():
    return build_geometry(Interval(-1.0, 1.0, 201))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
