import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

from dualsplit.instances import toy_problem  # noqa: E402
from dualsplit.network import static_metropolis_schedule  # noqa: E402


@pytest.fixture
def toy():
    return toy_problem()


@pytest.fixture
def toy_schedule():
    return static_metropolis_schedule(np.ones((2, 2)))


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.RESULTS
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])


@pytest.fixture(scope="session")
def pev20():
    """The m=20 fleet used by the PEV tests, with its centralized optimum."""
    from dualsplit.pev import PevConfig, generate_pev
    from dualsplit.solvers import solve_centralized

    problem = generate_pev(PevConfig(m=20, seed=0))
    return problem, solve_centralized(problem)


@pytest.fixture(scope="session")
def toy_long_run():
    """Ten thousand rounds on the two-agent toy with full diagnostics."""
    from dualsplit.engine import RunConfig, run

    return run(toy_problem(), static_metropolis_schedule(np.ones((2, 2))),
               RunConfig(iterations=10_000, diagnostics_level="full"))
