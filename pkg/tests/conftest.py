import numpy as np
import pytest

from dualecc import calibration, linalg, verification
from dualecc._backend import available_backends

BACKENDS = available_backends()

# lines printed by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(BACKENDS))
def backend(request, monkeypatch):
    """Route every kernel call through one backend for the test's duration."""
    k = BACKENDS[request.param]
    for mod in (calibration, linalg, verification):
        monkeypatch.setattr(mod, "kernels", k)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
