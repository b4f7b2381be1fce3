import numpy as np
import pytest

from memtrack import backend


@pytest.fixture(params=backend.available())
def kernels(request):
    """Run the test once per importable kernel set."""
    previous = backend.use(request.param)
    yield request.param
    backend.use(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion.

    Call the returned function with the criterion number, a summary, and the
    boolean outcome; it prints the line and asserts the outcome.
    """
    lines = request.config.stash[ACCEPTANCE]

    def record(number, summary, ok):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {summary}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
