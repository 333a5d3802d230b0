import numpy as np
import pytest

from sentinel.syngen import ScenarioSpec, generate_population, make_population


def small_population(separation=3.0, seed=0, hours=2.0, n_users=4, **kw):
    spec = ScenarioSpec(make_population(n_users, separation, seed=seed, **kw), hours * 3600.0, seed=seed)
    return generate_population(spec)


@pytest.fixture(scope="session")
def easy_dataset():
    return small_population(separation=6.0, seed=11, hours=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
