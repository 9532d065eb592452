import sys

import pytest

from trainplan.core import bundled_catalog, bundled_perfparams
from trainplan.steptime import bundled_day_cells, calibrate


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Repeat the acceptance scorecard lines after the test report."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance scorecard")
    for line in lines:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def catalog():
    return bundled_catalog()


@pytest.fixture(scope="session")
def params():
    """The calibrated parameters shipped with the package."""
    return bundled_perfparams()


@pytest.fixture(scope="session")
def fresh_fit(catalog):
    """One in-session calibration against the bundled observed-days tables.

    Session-scoped because the fit is the slowest single operation in the
    suite and several modules assert against the same result.
    """
    return calibrate([], bundled_day_cells(), catalog=catalog)
