import functools
import time

import numpy as np
import pytest

from ecpsim import scenarios, simulator

RUNTIMES = {}
ACCEPTANCE_LINES = []


@functools.lru_cache(maxsize=None)
def _run(name):
    sc = scenarios.get_scenario(name)
    t0 = time.perf_counter()
    records = tuple(simulator.run(sc))
    RUNTIMES[name] = time.perf_counter() - t0
    return sc, records


@pytest.fixture(scope="session")
def catalog_run():
    """``catalog_run(name) -> (scenario, records)``, each scenario simulated once."""
    return _run


@pytest.fixture(scope="session")
def runtimes():
    """Wall time in seconds of each cached catalog run."""
    return RUNTIMES


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
