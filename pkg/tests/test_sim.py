import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehsstune import (ControllerConfig, DivergenceError, IncompleteLog, ObjectiveWeights,
                      PlantParams, SimConfig, SmcConfig, objective, simulate, ultimate_bound)
from ehsstune import _kernels as K
from ehsstune.errors import DomainError
from ehsstune.plant import Reference
from ehsstune.sim import (LOG_COLUMNS, SimLog, TuningObjective, lyapunov_check,
                          lyapunov_diagnostics, phi_matrix, rk4_integrate, sigma_min,
                          total_variation)

from oracles import charpoly_sigma_min, rk4_decay_error

pytestmark = pytest.mark.usefixtures("compiled")


def synthetic_log(e1, u, n=2000, dt=0.01):
    data = np.zeros((n + 1, len(LOG_COLUMNS)))
    data[:, 0] = np.arange(n + 1) * dt
    data[:, LOG_COLUMNS.index("e1")] = e1
    data[:, LOG_COLUMNS.index("u")] = u
    return SimLog(data, dt)


# integrator

def test_rk4_order():
    errs = []
    for dt in (0.1, 0.05):
        y = rk4_integrate(K.linear_decay_rhs, [1.0], 0.0, dt, int(round(1 / dt)), [1.0])
        errs.append(abs(y[0] - math.exp(-1)))
    assert errs[0] / errs[1] >= 14
    assert math.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.1)


def test_rk4_matches_hand_written():
    y = rk4_integrate(K.linear_decay_rhs, [1.0], 0.0, 0.1, 10, [1.0])
    assert abs(y[0] - math.exp(-1)) == pytest.approx(rk4_decay_error(0.1), rel=1e-12)


# configuration

def test_sim_config_divisibility():
    with pytest.raises(DomainError):
        SimConfig(horizon=1.0, sample_dt=0.03)
    with pytest.raises(DomainError):
        SimConfig(sample_dt=0.01, internal_dt=0.003)
    assert SimConfig().n_samples == 2000
    assert SimConfig(internal_dt=1e-4).substeps(ControllerConfig()) == 100


def test_auto_substeps_scale_with_lam():
    sim = SimConfig()
    assert sim.substeps(ControllerConfig(lam=16.0)) > sim.substeps(ControllerConfig(lam=9.0))
    assert sim.substeps(ControllerConfig(lam=9.0)) >= 100


def test_weights_validation():
    with pytest.raises(DomainError):
        ObjectiveWeights(0.0, 0.0)
    with pytest.raises(DomainError):
        ObjectiveWeights(-1.0, 1.0)


# simulate

def test_quiescent_run():
    plant = PlantParams(d_const=0.0)
    ctrl = ControllerConfig(F_max=0.0)
    log = simulate(plant, ctrl, SimConfig(horizon=1.0, reference=Reference.step(0.0)))
    assert np.all(log.e1 == 0) and np.all(log.u == 0)


def test_log_shape_and_time():
    log = simulate(PlantParams(), ControllerConfig(), SimConfig(horizon=0.5))
    assert len(log) == 51
    assert np.all(np.diff(log.t) > 0)
    assert np.all(np.isfinite(log.data))
    assert log.data.flags.writeable is False


def test_determinism_short():
    sim = SimConfig(horizon=0.5, seed=3)
    a = simulate(PlantParams(), ControllerConfig(), sim)
    b = simulate(PlantParams(), ControllerConfig(), sim)
    assert a == b


def test_zero_order_hold_mode():
    sim = SimConfig(horizon=1.0, control_hold=True)
    held = simulate(PlantParams(), SmcConfig(), sim)
    cont = simulate(PlantParams(), SmcConfig(), sim.with_(control_hold=False))
    assert np.all(np.isfinite(held.data))
    assert not np.array_equal(held.e1, cont.e1)
    # the backstepping loop is far faster than a 100 Hz hold and goes unstable
    with pytest.raises(DivergenceError):
        simulate(PlantParams(), ControllerConfig(lam=9.0), sim)


def test_printed_law_diverges():
    with pytest.raises(DivergenceError) as err:
        simulate(PlantParams(), ControllerConfig(law="printed"), SimConfig(horizon=2.0))
    log = err.value.log
    assert log.diverged and 0 < len(log) < 201
    with pytest.raises(IncompleteLog):
        objective(log)


def test_csv_roundtrip(tmp_path):
    log = simulate(PlantParams(), ControllerConfig(), SimConfig(horizon=0.2))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    back = SimLog.from_csv(path)
    assert back == log
    assert path.read_text().splitlines()[0] == ",".join(LOG_COLUMNS)


def test_open_loop_runs():
    log = simulate(PlantParams(), None, SimConfig(horizon=0.2))
    assert np.all(log.u == 0)
    assert log.data[-1, 1] == pytest.approx(0.1 * 0.2, rel=0.05)


def test_smc_runs():
    log = simulate(PlantParams(), SmcConfig(), SimConfig(horizon=1.0))
    assert set(np.unique(np.abs(log.u))) <= {0.0, 0.01}


def test_step_size_independence():
    ctrl = ControllerConfig()
    base = simulate(PlantParams(), ctrl, SimConfig(), diagnostics=False)
    n = SimConfig().substeps(ctrl)
    fine = simulate(PlantParams(), ctrl, SimConfig(internal_dt=0.01 / (2 * n)),
                    diagnostics=False)
    rel = abs(fine.e1[-1] - base.e1[-1]) / abs(fine.e1[-1])
    assert rel < 1e-6


# objective

def test_objective_zero():
    assert objective(synthetic_log(0.0, 0.0)) == 0


def test_objective_constant_error():
    # 0.1 is not representable: the correctly rounded sum of the 2000 squared
    # samples is 20.000000000000004, one ulp above 20
    val = objective(synthetic_log(0.1, 0.0), ObjectiveWeights(1.0, 1.0))
    assert val == math.fsum([0.1 * 0.1] * 2000)
    assert abs(val - 20.0) <= math.ulp(20.0)


def test_objective_constant_input():
    assert objective(synthetic_log(0.0, 2.0), ObjectiveWeights(1.0, 0.5)) == 4000.0


def test_objective_excludes_t0():
    data = synthetic_log(0.0, 0.0).data.copy()
    data[0, LOG_COLUMNS.index("e1")] = 100.0
    assert objective(SimLog(data)) == 0


@given(st.integers(1, 2000), st.floats(1e-6, 10.0))
def test_objective_monotone_in_u(k, bump):
    rng = np.random.default_rng(k)
    u = rng.normal(size=2001) * 1e-3
    base = objective(synthetic_log(0.01, u))
    u2 = u.copy()
    u2[k] = abs(u2[k]) + bump
    assert objective(synthetic_log(0.01, u2)) > base


def test_total_variation():
    assert total_variation([0, 1, -1, 2]) == 6


# ultimate bound

def test_bound_zero_disturbance():
    assert ultimate_bound(ControllerConfig(d_max=0.0))[0] == 0


def test_bound_identity_hook():
    bound, smin = ultimate_bound(ControllerConfig(lam=2.0), phi=np.eye(3))
    assert smin == 1.0
    assert bound == pytest.approx(0.01 / (2 * (2 + 32)), rel=1e-15)


def test_bound_tuned_value():
    lam = 13.5585
    bound, smin = ultimate_bound(ControllerConfig(lam=lam))
    assert smin == pytest.approx(charpoly_sigma_min(phi_matrix(lam)), rel=1e-10)
    assert bound == pytest.approx(0.01 / (2 * (lam + lam**5) * smin), rel=1e-15)


def test_phi2_form():
    lam = 10.0
    smin = sigma_min(phi_matrix(lam, "phi2"))
    assert smin == pytest.approx(charpoly_sigma_min(phi_matrix(lam, "phi2")), rel=1e-10)


def test_bound_domain():
    with pytest.raises(DomainError):
        phi_matrix(13.0, "other")


@given(st.floats(0.5, 100.0))
def test_sigma_min_oracle_wide(lam):
    phi = phi_matrix(lam)
    assert sigma_min(phi) == pytest.approx(charpoly_sigma_min(phi), rel=1e-9)


# Lyapunov diagnostics

def test_lyapunov_zero():
    data = np.zeros((5, len(LOG_COLUMNS)))
    data[:, 0] = np.arange(5) * 0.01
    theta = (15000.0, 0.0, 0.0)
    data[:, 10] = theta[0]
    data[:, 13] = theta[0] / 70
    V, _, _ = lyapunov_diagnostics(SimLog(data), ControllerConfig(), theta)
    assert np.all(V == 0)


def test_lyapunov_nonnegative_and_decreasing():
    log = simulate(PlantParams(), ControllerConfig(), SimConfig(horizon=2.0))
    assert np.all(log.V >= 0)
    frac, checked, tol = lyapunov_check(log, ControllerConfig())
    assert checked == len(log) and frac <= 1e-3 and tol > 0


def test_tuning_objective_sentinel():
    obj = TuningObjective(sim=SimConfig(horizon=0.5),
                          ctrl=ControllerConfig(law="printed"))
    assert obj((13.0, -9.0)) == 1e15
    assert obj.config((12.0, -8.0)).gamma7 == pytest.approx(1e-8)
