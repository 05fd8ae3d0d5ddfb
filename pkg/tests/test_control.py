import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chpfreq.control import (
    FirstOrderBlock,
    PassiveBlock,
    first_order_rhs,
    passivity_audit,
    second_order_block,
    static_characteristic,
    wrap_first_order_as_passive,
)
from chpfreq.errors import NonSettlingError, NumericalError, ValidationError


@pytest.mark.parametrize("y, u, q, expected", [
    (0.0, 0.0, 1.0, 0.0),
    (0.0, 0.05, 2.0, -0.025),
    (-0.05, 0.05, 1.0, 0.0),
])
def test_first_order_rhs(y, u, q, expected):
    assert first_order_rhs(FirstOrderBlock(q, y), u) == pytest.approx(expected, abs=1e-15)


def test_nonpositive_cost_rejected():
    with pytest.raises(ValidationError):
        FirstOrderBlock(0.0)


@pytest.mark.parametrize("q, u, k", [(1.0, 0.1, -0.1), (2.0, 0.0, 0.0), (0.5, -1.0, 2.0), (1.0, 0.05, -0.05)])
def test_wrapped_characteristic(q, u, k):
    blk = wrap_first_order_as_passive(FirstOrderBlock(q))
    assert static_characteristic(blk, u) == pytest.approx(k, abs=1e-8)


def test_characteristic_for_random_pairs():
    rng = np.random.default_rng(7)
    for q, u in zip(rng.uniform(0.2, 5.0, 100), rng.uniform(-1.0, 1.0, 100)):
        blk = wrap_first_order_as_passive(FirstOrderBlock(q))
        assert abs(static_characteristic(blk, u) + u / q) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(-1.0, 1.0))
def test_first_order_converges_within_twenty_time_constants(q, u):
    block = FirstOrderBlock(q)
    dt = 0.01
    for _ in range(2000):
        block.state += dt * first_order_rhs(block, u)  # explicit Euler is enough here
    assert abs(block.state + u / q) < 1e-8


@pytest.mark.parametrize("split", [0.2, 0.5, 0.8])
def test_second_order_dc_gain(split):
    blk = second_order_block(2.0, (0.5, 3.0), split)
    assert static_characteristic(blk, 1.0) == pytest.approx(-0.5, abs=1e-8)
    x = blk.steady_state(1.0)
    assert blk.output(x, 1.0) == pytest.approx(-0.5)


def test_declared_characteristic_is_checked():
    good = wrap_first_order_as_passive(FirstOrderBlock(1.0))
    liar = PassiveBlock(1, good.drift, good.output, characteristic=lambda u: u)
    with pytest.raises(NumericalError):
        static_characteristic(liar, 0.3)


def test_unstable_block_reported_as_non_settling():
    blk = PassiveBlock(1, lambda x, u: x + u, lambda x, u: float(x[0]))
    with pytest.raises(NonSettlingError):
        static_characteristic(blk, 0.1)


def test_oscillator_reported_as_non_settling():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    blk = PassiveBlock(2, lambda x, u: A @ x + np.array([0.0, u]), lambda x, u: float(x[0]))
    with pytest.raises(NonSettlingError):
        static_characteristic(blk, 1.0, max_steps=20000)


# -- audit --------------------------------------------------------------------


def simulate_block(blk, u_of_t, t_end=20.0, dt=0.01):
    t = np.arange(0.0, t_end + dt / 2, dt)
    X = np.zeros((len(t), blk.dim))
    x = np.zeros(blk.dim)
    for k in range(1, len(t)):
        u0, um, u1 = u_of_t(t[k - 1]), u_of_t(t[k - 1] + dt / 2), u_of_t(t[k])
        k1 = blk.drift(x, u0)
        k2 = blk.drift(x + dt / 2 * k1, um)
        k3 = blk.drift(x + dt / 2 * k2, um)
        k4 = blk.drift(x + dt * k3, u1)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[k] = x
    return t, np.array([u_of_t(s) for s in t]), X


def u_trace(t):
    return -0.05 + 0.04 * np.exp(-0.3 * t) * np.sin(2.0 * t)


@pytest.mark.parametrize("make", [
    lambda: wrap_first_order_as_passive(FirstOrderBlock(1.5)),
    lambda: second_order_block(1.5, (0.5, 3.0), 0.4),
])
def test_audit_passes_on_block_trajectory(make):
    blk = make()
    t, u, X = simulate_block(blk, u_trace, t_end=60.0)
    u_star = -0.05
    rep = passivity_audit(blk, t, u, X, (u_star, blk.steady_state(u_star), blk.characteristic(u_star)))
    assert rep.passed, rep
    assert rep.flags  # no dissipation function supplied


def test_audit_fails_on_sign_flipped_output():
    blk = wrap_first_order_as_passive(FirstOrderBlock(1.0))
    t, u, X = simulate_block(blk, u_trace)
    u_star = -0.05
    eq = (u_star, blk.steady_state(u_star), blk.characteristic(u_star))
    y = X[:, 0]
    flipped = 2 * eq[2] - y
    rep = passivity_audit(blk, t, u, X, eq, output_trace=flipped)
    assert not rep.passed
    assert rep.worst_slack < -1e-6


def test_audit_at_equilibrium_has_zero_slack():
    blk = second_order_block(1.0)
    u_star = 0.2
    xs = blk.steady_state(u_star)
    t = np.linspace(0, 5, 501)
    rep = passivity_audit(blk, t, np.full_like(t, u_star), np.tile(xs, (len(t), 1)),
                          (u_star, xs, blk.characteristic(u_star)))
    assert rep.passed and rep.worst_slack == pytest.approx(0.0, abs=1e-15)


def test_audit_prefixes_of_passing_trace_pass():
    blk = second_order_block(2.0, (0.5, 3.0), 0.3)
    t, u, X = simulate_block(blk, u_trace, t_end=30.0)
    eq = (-0.05, blk.steady_state(-0.05), blk.characteristic(-0.05))
    for n in (2, 10, 100, 1000, len(t)):
        assert passivity_audit(blk, t[:n], u[:n], X[:n], eq).passed


def test_audit_flags_missing_storage():
    blk = PassiveBlock(1, lambda x, u: -x - u, lambda x, u: float(x[0]))
    t = np.linspace(0, 1, 11)
    rep = passivity_audit(blk, t, np.zeros(11), np.zeros((11, 1)), (0.0, np.zeros(1), 0.0))
    assert any("storage" in f for f in rep.flags)


def test_audit_rejects_mismatched_traces():
    blk = second_order_block(1.0)
    with pytest.raises(ValidationError):
        passivity_audit(blk, np.arange(5.0), np.zeros(4), np.zeros((4, 2)), (0.0, np.zeros(2), 0.0))
    with pytest.raises(ValidationError):
        passivity_audit(blk, np.array([0.0, 1.0, 3.0]), np.zeros(3), np.zeros((3, 2)),
                        (0.0, np.zeros(2), 0.0))


def test_cascaded_lags_violate_the_inequality():
    """Why the demo block uses parallel lags: a cascade is not passive."""
    c = 1.0
    A = np.array([[-2.0, 0.0], [1.0, -1.0]])
    B = np.array([-2.0 * c, 0.0])
    blk = PassiveBlock(2, lambda x, u: A @ x + B * u, lambda x, u: float(x[1]),
                       storage=lambda x, xs: 0.5 * np.sum((np.asarray(x) - xs) ** 2, axis=-1))
    t, u, X = simulate_block(blk, lambda s: np.sin(3.0 * s), t_end=20.0)
    rep = passivity_audit(blk, t, u, X, (0.0, np.zeros(2), 0.0))
    assert not rep.passed
