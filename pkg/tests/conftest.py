"""Shared fixtures and the per-criterion acceptance summary."""
import numpy as np
import pytest

from mixlab import Alphabet, Potential, normalize

_CRITERIA = {}  # nodeid -> (number, title)
_OUTCOMES = {}  # number -> (title, passed)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _CRITERIA:
        return
    if report.when == "call" or report.failed or report.skipped:
        num, title = _CRITERIA[report.nodeid]
        prev = _OUTCOMES.get(num, (title, True))[1]
        _OUTCOMES[num] = (title, prev and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_OUTCOMES):
        title, ok = _OUTCOMES[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def binary():
    return Alphabet("01")


@pytest.fixture
def markov_q():
    return np.array([[0.9, 0.1], [0.2, 0.8]])


def random_normalized(alphabet, order, seed, scale=1.0):
    """Normalized potential from a Gaussian table."""
    rng = np.random.default_rng(seed)
    A = len(alphabet)
    phi = Potential(alphabet, order, scale * rng.normal(size=A ** (order + 1)))
    return normalize(phi).psi
