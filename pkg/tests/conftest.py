import warnings

import numpy as np
import pytest

from sesindex.catalog import default_catalog
from sesindex.synthetic import synthetic_area_table


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def table200(catalog):
    return synthetic_area_table(n_units=200, seed=3, catalog=catalog)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdicts so they appear in non-verbose logs too."""
    mod = __import__("sys").modules.get("test_acceptance") or __import__("sys").modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(results):
        ok, detail = results[i]
        terminalreporter.write_line(mod.report_line(i, ok, detail))
