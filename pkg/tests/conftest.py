import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ensemble_minimax import QubitEnsemble, QubitEnsembleSpec, TimeGrid  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture(scope="session")
def qspec():
    return QubitEnsembleSpec(E=1.0, alpha_lo=-0.5, alpha_hi=0.5)


@pytest.fixture(scope="session")
def qubit(qspec):
    return QubitEnsemble(qspec)


@pytest.fixture(scope="session")
def short_grid():
    return TimeGrid(2.0, 2**-5)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
