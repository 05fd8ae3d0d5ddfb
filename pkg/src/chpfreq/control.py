"""Generator and heat-source controllers.

Every controller is a single-input single-output block. Generators take the
local bus frequency deviation as input and return a power deviation; heat
sources take the average network temperature and return a heat deviation.
The output sign convention makes a frequency drop raise generation, so the
static characteristic of a droop block is ``K(u) = -u / Q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NonSettlingError, NumericalError, ValidationError

AUDIT_TOL = 1e-6
SETTLE_TOL = 1e-10


@dataclass
class FirstOrderBlock:
    """Droop lag ``dy/dt = -y - u/Q``. ``state`` is the output itself."""

    cost: float
    state: float = 0.0

    def __post_init__(self):
        if not self.cost > 0:
            raise ValidationError(f"cost coefficient must be positive, got {self.cost}")

    @property
    def gain(self) -> float:
        return 1.0 / self.cost

    def equilibrium(self, u: float) -> float:
        return -u / self.cost


def first_order_rhs(block: FirstOrderBlock, u: float) -> float:
    return -block.state - u / block.cost


@dataclass(frozen=True)
class PassiveBlock:
    """General block ``dx/dt = drift(x, u)``, ``y = output(x, u)``.

    Optional pieces:

    characteristic
        Declared static map ``K(u*)`` from a constant input to the settled output.
    steady_state
        Settled state for a constant input.
    storage
        ``storage(x, x_star)``, a storage function centred at ``x_star``.
        Shipped blocks accept a stack of states (one per row).
    dissipation
        ``phi(u_tilde)`` in the supply rate; ``None`` audits plain passivity.
    linear
        ``(A, B, C, D)`` realization when the block is linear. Used by the
        simulator to compile the whole network into matrix form.
    """

    dim: int
    drift: Callable[[np.ndarray, float], np.ndarray]
    output: Callable[[np.ndarray, float], float]
    characteristic: Optional[Callable[[float], float]] = None
    steady_state: Optional[Callable[[float], np.ndarray]] = None
    storage: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    dissipation: Optional[Callable[[float], float]] = None
    linear: Optional[tuple] = None
    name: str = "passive"


def _linear_block(A, B, C, D, **kwargs) -> PassiveBlock:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(-1)
    C = np.asarray(C, dtype=float).reshape(-1)
    D = float(D)
    return PassiveBlock(
        dim=A.shape[0],
        drift=lambda x, u: A @ x + B * u,
        output=lambda x, u: float(C @ x + D * u),
        linear=(A, B, C, D),
        **kwargs,
    )


def wrap_first_order_as_passive(block: FirstOrderBlock) -> PassiveBlock:
    Q = block.cost
    return _linear_block(
        [[-1.0]], [-1.0 / Q], [1.0], 0.0,
        characteristic=lambda u: -u / Q,
        steady_state=lambda u: np.array([-u / Q]),
        storage=lambda x, xs: 0.5 * Q * np.sum((np.asarray(x) - xs) ** 2, axis=-1),
        name="first_order",
    )


def second_order_block(cost: float, time_constants=(0.5, 3.0), split: float = 0.5) -> PassiveBlock:
    """Two parallel droop lags sharing the gain ``1/cost``.

    ``tau_i dx_i/dt = -x_i - c_i u`` with ``c_1 = split/cost``,
    ``c_2 = (1 - split)/cost`` and ``y = x_1 + x_2``. The DC gain is
    ``-1/cost``, and ``sum tau_i (x_i - x_i*)^2 / (2 c_i)`` is a storage
    function for the supply rate ``(u* - u)(y - y*)``.

    Two lags in cascade would have relative degree two and could not satisfy
    that inequality, which is why the lags sit in parallel.
    """
    if not cost > 0:
        raise ValidationError("cost coefficient must be positive")
    t1, t2 = (float(t) for t in time_constants)
    if t1 <= 0 or t2 <= 0:
        raise ValidationError("time constants must be positive")
    if not 0 < split < 1:
        raise ValidationError("split must lie strictly between 0 and 1")
    c = np.array([split, 1.0 - split]) / cost
    tau = np.array([t1, t2])

    def storage(x, xs):
        d = np.asarray(x) - xs
        return np.sum(tau * d * d / (2.0 * c), axis=-1)

    return _linear_block(
        np.diag(-1.0 / tau), -c / tau, [1.0, 1.0], 0.0,
        characteristic=lambda u: -u / cost,
        steady_state=lambda u: -c * u,
        storage=storage,
        name="second_order",
    )


def block_steady_state(block: PassiveBlock, u: float, **kwargs) -> np.ndarray:
    if block.steady_state is not None:
        return np.asarray(block.steady_state(u), dtype=float)
    return _settle(block, u, **kwargs)[0]


def _settle(block: PassiveBlock, u: float, dt=0.01, max_steps=10**6, window=1000):
    x = np.zeros(block.dim)

    def f(z):
        return np.asarray(block.drift(z, u), dtype=float)

    prev_peak = np.inf
    peak = 0.0
    for step in range(1, max_steps + 1):
        k1 = f(x)
        speed = float(np.max(np.abs(k1))) if block.dim else 0.0
        if not np.isfinite(speed):
            raise NonSettlingError(f"block state diverged at step {step}")
        if speed < SETTLE_TOL:
            return x, step
        peak = max(peak, speed)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if step % window == 0:
            if peak >= prev_peak:
                raise NonSettlingError(
                    f"block did not settle: peak |dx/dt| {peak:.3g} did not decrease over "
                    f"{window} steps"
                )
            prev_peak, peak = peak, 0.0
    raise NonSettlingError(f"block did not settle within {max_steps} steps")


def static_characteristic(block: PassiveBlock, u_star: float, *, check=True, tol=1e-8, **kwargs) -> float:
    """Settled output for the constant input ``u_star``.

    With ``check`` the block is integrated under the frozen input until its
    derivative falls below 1e-10 and the settled output is compared with the
    declared map.
    """
    if block.characteristic is not None and not check:
        return float(block.characteristic(u_star))
    x, _ = _settle(block, u_star, **kwargs)
    settled = float(block.output(x, u_star))
    if block.characteristic is None:
        return settled
    declared = float(block.characteristic(u_star))
    if abs(declared - settled) > tol:
        raise NumericalError(
            f"declared characteristic {declared!r} disagrees with settled output {settled!r}"
        )
    return declared


@dataclass
class AuditReport:
    passed: bool
    worst_slack: float
    worst_time: float
    n_samples: int
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_slack": self.worst_slack,
            "worst_time": self.worst_time,
            "n_samples": self.n_samples,
            "flags": list(self.flags),
        }


def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def passivity_audit(
    block: PassiveBlock,
    t,
    input_trace,
    state_trace,
    equilibrium,
    output_trace=None,
    tol: float = AUDIT_TOL,
) -> AuditReport:
    """Check the integrated dissipation inequality along sampled traces.

    For every prefix ``[0, t_k]`` the slack

        int (u* - u)(y - y*) dt - int phi(u* - u) dt - (V(x_k) - V(x_0))

    must be at least ``-tol``. ``equilibrium`` is ``(u*, x*, y*)``. If the
    block has no storage function the storage term is dropped; if it has no
    dissipation function ``phi`` is taken as zero. Both cases add a flag.
    """
    t = np.asarray(t, dtype=float)
    u = np.asarray(input_trace, dtype=float)
    X = np.asarray(state_trace, dtype=float).reshape(len(u), -1) if len(u) else np.zeros((0, block.dim))
    if not (len(t) == len(u) == len(X)):
        raise ValidationError("time, input and state traces must have equal length")
    if len(t) > 2 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
        raise ValidationError("traces must be sampled on a uniform grid")
    u_star, x_star, y_star = equilibrium
    x_star = np.asarray(x_star, dtype=float)
    if output_trace is None and block.linear is not None:
        y = X @ block.linear[2] + block.linear[3] * u
    elif output_trace is None:
        y = np.array([block.output(x, ui) for x, ui in zip(X, u)])
    else:
        y = np.asarray(output_trace, dtype=float)
        if len(y) != len(u):
            raise ValidationError("output trace length mismatch")

    flags = []
    u_tilde = u_star - u
    supply = u_tilde * (y - y_star)
    if block.dissipation is not None:
        supply = supply - np.array([block.dissipation(v) for v in u_tilde])
    else:
        flags.append("no dissipation function: plain passivity checked (phi = 0)")
    if block.storage is not None:
        V = np.asarray(block.storage(X, x_star), dtype=float)
        if V.shape != (len(X),):
            V = np.array([float(block.storage(x, x_star)) for x in X])
    else:
        V = np.zeros(len(u))
        flags.append("no storage function: storage term dropped")

    if len(t) == 0:
        return AuditReport(True, 0.0, 0.0, 0, flags)
    slack = _cumtrapz(supply, t) - (V - V[0])
    k = int(np.argmin(slack))
    worst = float(slack[k])
    return AuditReport(worst >= -tol, worst, float(t[k]), len(t), flags)
