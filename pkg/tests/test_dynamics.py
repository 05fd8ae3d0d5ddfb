import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from chpfreq.dispatch import compute_equilibrium
from chpfreq.dynamics import (
    System,
    assemble_rhs,
    line_flow,
    pump_mode1_power,
    pump_mode2_coupling,
    rk4_step,
    simulate,
)
from chpfreq.errors import NumericalError, ValidationError
from chpfreq.scenario import load_scenario

from helpers import make_scenario


@pytest.mark.parametrize("eta, b, pnom, expected", [
    (math.pi / 6, 1.0, 0.0, 0.5),
    (0.0, 3.0, 0.2, -0.2),
    (0.3, 2.5, 0.1, 2.5 * math.sin(0.3) - 0.1),
])
def test_line_flow(eta, b, pnom, expected):
    assert line_flow(eta, b, pnom) == pytest.approx(expected, abs=1e-15)


def test_line_flow_vectorised():
    eta = np.array([0.0, 0.3, -0.3])
    assert_allclose(line_flow(eta, 2.5, 0.1), [-0.1, 0.6388005166533489, -0.8388005166533489], atol=1e-15)


def test_pump_mode1():
    assert pump_mode1_power(0.0, 7.0) == 0.0
    p = pump_mode1_power(-0.02, 3.0)
    assert p == pytest.approx(-0.06)
    assert 3.0 * p == pytest.approx(-0.18)  # heat delivered at CoP 3


def test_pump_mode2_coupling():
    sys2 = System(make_scenario(coupling={"link_susceptance": 1.0}), mode=2)
    x = sys2.zero_state()
    w, p = pump_mode2_coupling(x, sys2)
    assert_array_equal(w, [0.0])
    x[sys2.s_eta.start + 3] = 0.1  # the host -> converter link is appended last
    _, p = pump_mode2_coupling(x, sys2)
    assert p[0] == pytest.approx(0.0998334, abs=1e-7)
    x = sys2.zero_state()
    x[sys2.s_T] = -0.1
    w, _ = pump_mode2_coupling(x, sys2)
    assert w[0] == pytest.approx(-0.05, abs=1e-15)


def test_pump_mode2_coupling_needs_mode2():
    with pytest.raises(ValidationError):
        pump_mode2_coupling(np.zeros(1), System(make_scenario(), mode=1))


# -- integrator ---------------------------------------------------------------


def test_rk4_decay_step():
    assert rk4_step(lambda x: -x, np.array([1.0]), 0.1)[0] == pytest.approx(0.9048375, abs=1e-7)


def test_rk4_zero_field():
    x = np.array([1.0, -2.0, 3.0])
    assert_array_equal(rk4_step(lambda z: np.zeros_like(z), x, 0.5), x)


def decay_error(dt):
    x = np.array([1.0])
    for _ in range(int(round(1.0 / dt))):
        x = rk4_step(lambda z: -z, x, dt)
    return abs(x[0] - math.exp(-1.0))


def test_rk4_fourth_order():
    ratio = decay_error(0.1) / decay_error(0.05)
    assert 12 <= ratio <= 20


# -- right-hand side ------------------------------------------------------------


@pytest.mark.parametrize("mode", [1, 2])
def test_zero_state_is_rest_point(mode):
    sys_ = System(make_scenario(disturbances=[]), mode=mode)
    assert_array_equal(assemble_rhs(sys_.zero_state(), sys_), 0.0)


def test_load_step_hits_only_the_loaded_bus():
    sc = make_scenario()
    sys_ = System(sc)
    dx = assemble_rhs(sys_.zero_state(), sys_, t=5.0)
    expected = np.zeros(sys_.n_state)
    expected[sys_.s_omega.start + 1] = -0.1 / sc.electric.inertia[1]
    assert_allclose(dx, expected, atol=1e-16)


@pytest.mark.parametrize("mode", [1, 2])
def test_uniform_temperature_is_stationary(mode):
    sys_ = System(make_scenario(disturbances=[]), mode=mode)
    x = sys_.zero_state()
    x[sys_.s_T] = 0.7
    assert_allclose(assemble_rhs(x, sys_)[sys_.s_T], 0.0, atol=1e-15)


@pytest.mark.parametrize("name, mode", [("paper_mode1", 1), ("paper_mode1", 2), ("paper_second_order", 1)])
def test_compiled_matches_structured(name, mode):
    sys_ = System(load_scenario(name), mode=mode)
    rng = np.random.default_rng(3)
    p_load, h_load = sys_.loads_at(10.0)
    rhs = sys_.compiled_rhs(p_load, h_load)
    for _ in range(5):
        x = rng.normal(scale=0.3, size=sys_.n_state)
        assert_allclose(rhs(x), sys_.structured_rhs(x, sys_.flows(x), p_load, h_load), atol=1e-13)


# -- trajectories ---------------------------------------------------------------


@pytest.mark.parametrize("mode", [1, 2])
def test_null_scenario_stays_at_origin(mode):
    traj = simulate(load_scenario("null_scenario"), mode=mode, t_end=20.0)
    assert np.max(np.abs(traj.states)) == 0.0


def test_heat_content_conserved_without_injection():
    sc = make_scenario(disturbances=[], sim={"dt": 0.01})
    sys_ = System(sc)
    rng = np.random.default_rng(11)
    x = sys_.zero_state()
    T = rng.normal(size=sys_.n_T)
    x[sys_.s_T] = T - (T @ sys_.vol) / sys_.total_volume  # zero mean keeps sources idle
    traj = simulate(sc, t_end=100.0, initial_state=x, system=sys_)
    content = traj.temperature @ sys_.vol
    assert np.max(np.abs(content - content[0])) < 1e-9
    assert np.ptp(traj.temperature[-1]) < np.ptp(T)  # mixing does happen


@pytest.mark.parametrize("mode", [1, 2])
def test_recorded_power_balance(mode):
    sc = load_scenario("paper_mode1")
    traj = simulate(sc, mode=mode, t_end=20.0)
    sys_ = traj.system
    P_load, _ = traj.loads
    w = traj.omega
    r = -P_load - sys_.electric.damping * w + traj.net_inflow
    np.add.at(r.T, sys_.gen_bus, traj.p_gen.T)
    np.subtract.at(r.T, sys_.pump_bus, traj.p_pump.T)
    M = sys_.electric.inertia
    dt = traj.dt
    # loads are held over each step, so both trapezoid ends use the interval's load
    r_end = r[1:] + (P_load[1:] - P_load[:-1])
    quad = 0.5 * dt * (r[:-1] + r_end)
    for b in sys_.inertial:
        assert_allclose(M[b] * np.diff(w[:, b]), quad[:, b], atol=1e-8)
    if mode == 2:
        assert_allclose(r[:, sys_.conv], 0.0, atol=1e-13)


def test_mode2_algebraic_consistency():
    traj = simulate(load_scenario("paper_mode1"), mode=2, t_end=20.0)
    sys_ = traj.system
    assert_array_equal(traj.p_pump, traj.net_inflow[:, sys_.conv])
    assert_array_equal(traj.omega[:, sys_.conv], np.outer(traj.tbar, sys_.m))


def test_step_is_right_continuous():
    sc = load_scenario("paper_mode1")
    sys_ = System(sc)
    x = np.random.default_rng(5).normal(scale=0.01, size=sys_.n_state)
    x[sys_.s_eta] = sys_.E @ np.array([0.0, 0.01, -0.02])
    before = assemble_rhs(x, sys_, t=5.0 - 1e-6)
    after = assemble_rhs(x, sys_, t=5.0)
    diff = after - before
    k = sys_.s_omega.start + 1
    assert diff[k] == pytest.approx(-0.1 / sc.electric.inertia[1], abs=1e-15)
    diff[k] = 0.0
    assert_array_equal(diff, 0.0)


def test_disturbance_lands_on_grid_point():
    traj = simulate(load_scenario("paper_mode1"), t_end=6.0, dt=0.01)
    k = int(round(5.0 / 0.01))
    assert np.max(np.abs(traj.states[: k + 1])) == 0.0
    assert np.max(np.abs(traj.states[k + 1])) > 0.0


def test_self_convergence_on_dt_halving():
    sc = load_scenario("paper_mode1")
    a = simulate(sc, t_end=10.0, dt=0.004).states[-1]
    b = simulate(sc, t_end=10.0, dt=0.002).states[-1]
    c = simulate(sc, t_end=10.0, dt=0.001).states[-1]
    e1, e2 = np.max(np.abs(a - c)), np.max(np.abs(b - c))
    assert e2 < 1e-9
    assert e1 / e2 > 8


@pytest.mark.parametrize("mode", [1, 2])
def test_converges_to_equilibrium(paper_runs, mode):
    traj = paper_runs("paper_mode1", mode)
    eq = compute_equilibrium(traj.system)
    assert np.max(np.abs(traj.states[-1] - eq.state)) < 1e-6


def test_blow_up_is_reported():
    with pytest.raises(NumericalError, match="blew up"):
        simulate(load_scenario("paper_mode1"), t_end=10.0, dt=0.01, bound=1e-3)


def test_horizon_must_be_grid_multiple():
    with pytest.raises(ValidationError):
        simulate(load_scenario("paper_mode1"), t_end=1.0005, dt=0.001)


def test_inconsistent_initial_angles_rejected():
    sys_ = System(load_scenario("paper_mode1"))
    x = sys_.zero_state()
    x[sys_.s_eta] = [0.1, 0.1, 0.1]  # a triangle cannot carry equal differences all the way round
    with pytest.raises(ValidationError, match="cycle"):
        simulate(sys_.scenario, t_end=1.0, initial_state=x, system=sys_)
