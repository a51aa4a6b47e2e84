import datetime as dt

import numpy as np
import pytest

from trafficgrid.grid import CityConfig


@pytest.fixture
def small_city():
    return CityConfig(name="testville", lat_min=52.0, lon_min=13.0, rows=20, cols=20)


@pytest.fixture
def rng():
    return np.random.default_rng(20210601)


@pytest.fixture
def date():
    return dt.date(2020, 4, 7)


ACCEPTANCE_RESULTS = []


@pytest.fixture
def accept():
    """Record one acceptance line; fail the test afterwards if the criterion did not hold."""

    def record(number, ok, title, detail=""):
        status = "PASS" if ok is True else ("REPORT" if ok is None else "FAIL")
        line = f"criterion {number:>2} {status}: {title}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_RESULTS.append(line)
        print(line)
        assert ok is not False, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
