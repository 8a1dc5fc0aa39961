import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = []


@pytest.fixture(scope="session")
def compiled():
    """Trigger (or load from cache) the compiled kernels once per session.

    Runtime budgets are measured after this, so they exclude one-off JIT
    compilation.
    """
    from ehsstune import ControllerConfig, PlantParams, SimConfig, SmcConfig, simulate
    from ehsstune import _kernels as K
    from ehsstune.sim import rk4_integrate
    rk4_integrate(K.linear_decay_rhs, [1.0], 0.0, 0.1, 1, [1.0])
    sim = SimConfig(horizon=0.02)
    simulate(PlantParams(), ControllerConfig(), sim)
    simulate(PlantParams(), SmcConfig(), sim)
    simulate(PlantParams(), ControllerConfig(), sim.with_(control_hold=True))
    return True


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)
