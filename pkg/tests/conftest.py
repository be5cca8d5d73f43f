import numpy as np
import pytest

from onsetforge.basis import toy_basis_set

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    key = (number, title)
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _CRITERIA.get(key, "PASS")
        ok = rep.outcome == "passed" and prev == "PASS"
        _CRITERIA[key] = "PASS" if ok else ("SKIP" if rep.outcome == "skipped" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number:>2} [{status}] {title}")


@pytest.fixture(scope="session")
def toy_set():
    """Four velocity layers of the synthetic toy basis."""
    return toy_basis_set(rng_seed=0)


@pytest.fixture(scope="session")
def toy_basis(toy_set):
    return toy_set[2]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
