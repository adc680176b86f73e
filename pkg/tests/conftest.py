import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tone(freq, srate, n, amp=1.0, phase=0.0):
    t = np.arange(n) / srate
    return amp * np.sin(2 * np.pi * freq * t + phase)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
