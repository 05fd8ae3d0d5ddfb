"""Coupled electric/thermal dynamics and the fixed-step integrator.

The state vector is laid out as

    [ line angle differences | frequencies of inertial buses |
      generator block states | edge temperatures | node temperatures |
      heat-source block states ]

Converter buses (pump mode 2) have no frequency state: their frequency is
``m * Tbar`` and their pump power is the net line inflow, both read off the
current state. Every quantity other than ``sin(eta)`` enters the right-hand
side linearly, so when all controller blocks are linear the whole system is
compiled to ``A x + G sin(eta) + f`` by probing the structured evaluator with
unit vectors. Nonlinear blocks fall back to the structured evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NumericalError, ValidationError
from .network import assemble_ah

DEFAULT_BOUND = 1e6


def line_flow(eta, susceptance, nominal_flow=0.0):
    """Active power on a line: ``B sin(eta) - p_nom``."""
    return susceptance * np.sin(eta) - nominal_flow


def pump_mode1_power(omega, gain):
    """Frequency-dependent pump load ``a * omega``."""
    return gain * omega


@dataclass(frozen=True)
class SystemState:
    eta: np.ndarray
    omega: np.ndarray
    gen: np.ndarray
    temp_edge: np.ndarray
    temp_node: np.ndarray
    src: np.ndarray

    @property
    def temperature(self) -> np.ndarray:
        return np.concatenate([self.temp_edge, self.temp_node])


def rk4_step(rhs, x, dt):
    """One classical Runge-Kutta step of ``dx/dt = rhs(x)``."""
    k1 = rhs(x)
    k2 = rhs(x + 0.5 * dt * k1)
    k3 = rhs(x + 0.5 * dt * k2)
    k4 = rhs(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class System:
    """A scenario compiled for one pump mode."""

    def __init__(self, scenario, mode: int | None = None):
        self.scenario = scenario
        self.mode = scenario.mode if mode is None else int(mode)
        if self.mode not in (1, 2):
            raise ValidationError(f"mode must be 1 or 2, got {self.mode}")
        if self.mode == 2 and not scenario.supports_mode2:
            raise ValidationError("scenario has no link_susceptance for mode 2 converter buses")
        self.electric = scenario.electric_for_mode(self.mode)
        self.heat = scenario.heat
        self.coupling = scenario.coupling
        self.gen_blocks = scenario.generator_blocks()
        self.src_blocks = scenario.source_blocks()

        el, ht, cp = self.electric, self.heat, self.coupling
        self.E = el.incidence
        self.Ah = assemble_ah(ht)
        self.vol = ht.volumes
        self.total_volume = float(self.vol.sum())
        self.inertial = el.inertial_buses
        self.conv = np.array(el.converters, dtype=int)
        self.gen_bus = np.array(el.generators, dtype=int)
        self.src_edge = ht.source_edges
        self.pump_edge = np.array(cp.edges, dtype=int)
        self.pump_bus = np.array(el.pump_buses, dtype=int)
        self.m = cp.mode2_coefficient
        self.cop = cp.cop
        self.a1 = cp.mode1_gain
        if self.mode == 1 and np.any(np.isin(self.pump_bus, self.conv)):
            raise ValidationError("mode 1 pumps must sit on inertial buses")

        self.n_lines = el.n_lines
        self.n_bus = el.n_bus
        self.n_omega = len(self.inertial)
        self.n_T = ht.n_edges + ht.n_nodes
        self.gen_dims = [b.dim for b in self.gen_blocks]
        self.src_dims = [b.dim for b in self.src_blocks]
        sizes = [self.n_lines, self.n_omega, sum(self.gen_dims), ht.n_edges, ht.n_nodes, sum(self.src_dims)]
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        (self.s_eta, self.s_omega, self.s_gen, self.s_TE, self.s_TN, self.s_src) = (
            slice(bounds[i], bounds[i + 1]) for i in range(6)
        )
        self.s_T = slice(self.s_TE.start, self.s_TN.stop)
        self.n_state = int(bounds[-1])
        self._gen_offsets = np.concatenate([[0], np.cumsum(self.gen_dims)]).astype(int)
        self._src_offsets = np.concatenate([[0], np.cumsum(self.src_dims)]).astype(int)
        self.is_linear = all(b.linear is not None for b in (*self.gen_blocks, *self.src_blocks))
        if self.is_linear:
            self._compile()

    # layout ---------------------------------------------------------------

    @cached_property
    def state_names(self) -> list[str]:
        el, ht = self.electric, self.heat
        names = [f"eta_{i + 1}-{j + 1}" for i, j in el.lines]
        names += [f"omega_{b + 1}" for b in self.inertial]
        for g, d in zip(self.gen_bus, self.gen_dims):
            names += [f"xG_{g + 1}" if d == 1 else f"xG_{g + 1}[{k}]" for k in range(d)]
        names += [f"TE_{j + 1}" for j in range(ht.n_edges)]
        names += [f"TN_{k + 1}" for k in range(ht.n_nodes)]
        for e, d in zip(self.src_edge, self.src_dims):
            names += [f"xH_{e + 1}" if d == 1 else f"xH_{e + 1}[{k}]" for k in range(d)]
        return names

    def unpack(self, x) -> SystemState:
        x = np.asarray(x, dtype=float)
        return SystemState(
            eta=x[self.s_eta], omega=x[self.s_omega], gen=x[self.s_gen],
            temp_edge=x[self.s_TE], temp_node=x[self.s_TN], src=x[self.s_src],
        )

    def pack(self, state: SystemState) -> np.ndarray:
        x = np.concatenate([state.eta, state.omega, state.gen, state.temp_edge, state.temp_node, state.src])
        if x.shape != (self.n_state,):
            raise ValidationError(f"state has {x.size} entries, expected {self.n_state}")
        return x

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n_state)

    # loads ----------------------------------------------------------------

    def loads_at(self, t: float, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Bus power loads and per-edge heat loads active at time ``t`` (right-continuous)."""
        p = np.zeros(self.n_bus)
        h = np.array(self.heat.heat_load, dtype=float)
        for d in self.scenario.disturbances:
            if d.time <= t + tol:
                if d.target == "bus":
                    p[d.index] += d.magnitude
                else:
                    h[d.index] += d.magnitude
        return p, h

    def loads_at_index(self, k: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Loads on the step starting at grid index ``k`` (disturbances snapped to the grid)."""
        p = np.zeros(self.n_bus)
        h = np.array(self.heat.heat_load, dtype=float)
        for d in self.scenario.disturbances:
            if int(round(d.time / dt)) <= k:
                if d.target == "bus":
                    p[d.index] += d.magnitude
                else:
                    h[d.index] += d.magnitude
        return p, h

    # structured evaluation --------------------------------------------------

    def outputs(self, x, p_line) -> dict:
        """Algebraic quantities at one instant, given the state and line flows."""
        x = np.asarray(x, dtype=float)
        T = x[self.s_T]
        tbar = float(T @ self.vol) / self.total_volume
        w_all = np.zeros(self.n_bus)
        w_all[self.inertial] = x[self.s_omega]
        if self.mode == 2 and len(self.conv):
            w_all[self.conv] = self.m * tbar
        inflow = -self.E.T @ p_line
        xg, xh = x[self.s_gen], x[self.s_src]
        go, so = self._gen_offsets, self._src_offsets
        pG = np.array([
            blk.output(xg[go[i]:go[i + 1]], w_all[self.gen_bus[i]]) for i, blk in enumerate(self.gen_blocks)
        ])
        hG = np.array([blk.output(xh[so[i]:so[i + 1]], tbar) for i, blk in enumerate(self.src_blocks)])
        if self.mode == 1:
            pP = pump_mode1_power(w_all[self.pump_bus], self.a1)
        else:
            pP = inflow[self.conv]
        return {"omega": w_all, "tbar": tbar, "inflow": inflow, "pG": pG, "hG": hG, "pP": pP}

    def structured_rhs(self, x, p_line, p_load, h_load) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.outputs(x, p_line)
        w_all, tbar = out["omega"], out["tbar"]
        dx = np.empty(self.n_state)

        balance = -p_load - self.electric.damping * w_all + out["inflow"]
        np.add.at(balance, self.gen_bus, out["pG"])
        if self.mode == 1:
            np.subtract.at(balance, self.pump_bus, out["pP"])
        dx[self.s_omega] = balance[self.inertial] / self.electric.inertia[self.inertial]
        dx[self.s_eta] = self.E @ w_all

        xg, xh = x[self.s_gen], x[self.s_src]
        go, so = self._gen_offsets, self._src_offsets
        for i, blk in enumerate(self.gen_blocks):
            dx[self.s_gen][go[i]:go[i + 1]] = blk.drift(xg[go[i]:go[i + 1]], w_all[self.gen_bus[i]])
        for i, blk in enumerate(self.src_blocks):
            dx[self.s_src][so[i]:so[i + 1]] = blk.drift(xh[so[i]:so[i + 1]], tbar)

        inj = -np.asarray(h_load, dtype=float).copy()
        np.add.at(inj, self.src_edge, out["hG"])
        np.add.at(inj, self.pump_edge, self.cop * out["pP"])
        T = x[self.s_T]
        heat_in = np.concatenate([inj, np.zeros(self.heat.n_nodes)])
        dx[self.s_T] = (-self.Ah @ T + heat_in) / self.vol
        return dx

    def flows(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return line_flow(x[..., self.s_eta], self.electric.susceptance, self.electric.nominal_flow)

    # compiled form ----------------------------------------------------------

    def _compile(self):
        n, nl, nb, ne = self.n_state, self.n_lines, self.n_bus, self.heat.n_edges
        zl, zb, ze = np.zeros(nl), np.zeros(nb), np.zeros(ne)
        eye = np.eye
        self.A = np.column_stack([self.structured_rhs(e, zl, zb, ze) for e in eye(n)]) if n else np.zeros((0, 0))
        self.G = (np.column_stack([self.structured_rhs(np.zeros(n), e, zb, ze) for e in eye(nl)])
                  if nl else np.zeros((n, 0)))
        self.Fp = np.column_stack([self.structured_rhs(np.zeros(n), zl, e, ze) for e in eye(nb)])
        self.Fh = (np.column_stack([self.structured_rhs(np.zeros(n), zl, zb, e) for e in eye(ne)])
                   if ne else np.zeros((n, 0)))
        self.GB = self.G * self.electric.susceptance
        self.g0 = -self.G @ self.electric.nominal_flow

    def forcing(self, p_load, h_load) -> np.ndarray:
        return self.Fp @ p_load + self.Fh @ h_load + self.g0

    def compiled_rhs(self, p_load, h_load):
        """``dx/dt`` as a closure of the state, loads held fixed."""
        if not self.is_linear:
            def rhs(x):
                return self.structured_rhs(x, self.flows(x), p_load, h_load)
            return rhs
        A, GB, f, nl = self.A, self.GB, self.forcing(p_load, h_load), self.n_lines

        def rhs(x):
            return A @ x + GB @ np.sin(x[:nl]) + f

        return rhs

    def check_finite(self, x, what="state", t=None):
        bad = ~np.isfinite(x)
        if np.any(bad):
            k = int(np.argmax(bad))
            when = "" if t is None else f" at t={t:.6g}s"
            raise NumericalError(f"non-finite {what} component {self.state_names[k]}{when}")

    def check_eta_consistent(self, eta, tol=1e-9):
        """Initial angle differences must come from bus angles on meshed graphs."""
        if self.n_lines == 0:
            return
        theta, *_ = np.linalg.lstsq(self.E, eta, rcond=None)
        resid = np.max(np.abs(self.E @ theta - eta))
        if resid > tol:
            raise ValidationError(f"initial line angles are not cycle-consistent (residual {resid:.3g})")


def assemble_rhs(x, system, t: float = 0.0) -> np.ndarray:
    """Time derivative of the full state at time ``t``.

    ``system`` may be a :class:`System` or a scenario (compiled on the fly).
    """
    if not isinstance(system, System):
        system = System(system)
    x = np.asarray(x, dtype=float)
    system.check_finite(x, "state", t)
    p_load, h_load = system.loads_at(t)
    dx = system.structured_rhs(x, system.flows(x), p_load, h_load)
    system.check_finite(dx, "derivative", t)
    return dx


def pump_mode2_coupling(x, system: System) -> tuple[np.ndarray, np.ndarray]:
    """Converter-bus frequencies ``m * Tbar`` and pump powers (net line inflow)."""
    if system.mode != 2:
        raise ValidationError("pump_mode2_coupling needs a mode 2 system")
    out = system.outputs(x, system.flows(x))
    return out["omega"][system.conv], out["pP"]


class Trajectory:
    """Uniformly sampled states plus derived outputs recomputed on demand."""

    def __init__(self, system: System, t: np.ndarray, states: np.ndarray):
        self.system = system
        self.t = t
        self.states = states

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if len(self.t) > 1 else self.system.scenario.dt

    def __len__(self):
        return len(self.t)

    @cached_property
    def line_flows(self) -> np.ndarray:
        return self.system.flows(self.states)

    @cached_property
    def _outputs(self) -> dict:
        sys_, X, P = self.system, self.states, self.line_flows
        rows = [sys_.outputs(x, p) for x, p in zip(X, P)] if not sys_.is_linear else None
        if rows is not None:
            return {k: np.array([r[k] for r in rows]) for k in rows[0]}
        # vectorised evaluation of the same algebra for linear blocks
        T = X[:, sys_.s_T]
        tbar = T @ sys_.vol / sys_.total_volume
        w_all = np.zeros((len(X), sys_.n_bus))
        w_all[:, sys_.inertial] = X[:, sys_.s_omega]
        if sys_.mode == 2 and len(sys_.conv):
            w_all[:, sys_.conv] = np.outer(tbar, sys_.m)
        inflow = -P @ sys_.E
        pG = np.column_stack([
            X[:, sys_.s_gen][:, sys_._gen_offsets[i]:sys_._gen_offsets[i + 1]] @ blk.linear[2]
            + blk.linear[3] * w_all[:, sys_.gen_bus[i]]
            for i, blk in enumerate(sys_.gen_blocks)
        ]) if sys_.gen_blocks else np.zeros((len(X), 0))
        hG = np.column_stack([
            X[:, sys_.s_src][:, sys_._src_offsets[i]:sys_._src_offsets[i + 1]] @ blk.linear[2]
            + blk.linear[3] * tbar
            for i, blk in enumerate(sys_.src_blocks)
        ]) if sys_.src_blocks else np.zeros((len(X), 0))
        if sys_.mode == 1:
            pP = w_all[:, sys_.pump_bus] * sys_.a1
        else:
            pP = inflow[:, sys_.conv]
        return {"omega": w_all, "tbar": tbar, "inflow": inflow, "pG": pG, "hG": hG, "pP": pP}

    @property
    def omega(self) -> np.ndarray:
        """Frequencies of all buses, converter buses included."""
        return self._outputs["omega"]

    @property
    def tbar(self) -> np.ndarray:
        return self._outputs["tbar"]

    @property
    def p_gen(self) -> np.ndarray:
        return self._outputs["pG"]

    @property
    def h_gen(self) -> np.ndarray:
        return self._outputs["hG"]

    @property
    def p_pump(self) -> np.ndarray:
        return self._outputs["pP"]

    @property
    def h_pump(self) -> np.ndarray:
        return self._outputs["pP"] * self.system.cop

    @property
    def net_inflow(self) -> np.ndarray:
        return self._outputs["inflow"]

    @property
    def p_uncontrolled(self) -> np.ndarray:
        return self.omega * self.system.electric.damping

    @property
    def eta(self) -> np.ndarray:
        return self.states[:, self.system.s_eta]

    @property
    def temperature(self) -> np.ndarray:
        return self.states[:, self.system.s_T]

    @cached_property
    def loads(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-sample bus loads and edge heat loads, as applied by the integrator."""
        sys_ = self.system
        P = np.zeros((len(self.t), sys_.n_bus))
        H = np.tile(np.asarray(sys_.heat.heat_load, dtype=float), (len(self.t), 1))
        for d in sys_.scenario.disturbances:
            k = int(round(d.time / self.dt))
            target = P if d.target == "bus" else H
            target[k:, d.index] += d.magnitude
        return P, H

    def columns(self) -> dict[str, np.ndarray]:
        """Named time series in CSV column order."""
        sys_ = self.system
        el, ht = sys_.electric, sys_.heat
        cols = {"t": self.t}
        for b in range(el.n_bus):
            cols[f"omega_{b + 1}"] = self.omega[:, b]
        for k, (i, j) in enumerate(el.lines):
            cols[f"eta_{i + 1}-{j + 1}"] = self.eta[:, k]
        for k, g in enumerate(sys_.gen_bus):
            cols[f"pG_{g + 1}"] = self.p_gen[:, k]
        T = self.temperature
        for j in range(ht.n_edges):
            cols[f"TE_{j + 1}"] = T[:, j]
        for k in range(ht.n_nodes):
            cols[f"TN_{k + 1}"] = T[:, ht.n_edges + k]
        for k, e in enumerate(sys_.src_edge):
            cols[f"hG_{e + 1}"] = self.h_gen[:, k]
        for k in range(sys_.coupling.n_pumps):
            cols[f"pP_{k + 1}"] = self.p_pump[:, k]
        for k in range(sys_.coupling.n_pumps):
            cols[f"hP_{k + 1}"] = self.h_pump[:, k]
        cols["Tbar"] = self.tbar
        return cols


def simulate(
    scenario,
    *,
    mode: int | None = None,
    dt: float | None = None,
    t_end: float | None = None,
    initial_state=None,
    bound: float = DEFAULT_BOUND,
    system: System | None = None,
) -> Trajectory:
    """Integrate a scenario with fixed-step RK4 on ``[0, t_end]``.

    Disturbance instants are snapped to the nearest grid point and loads are
    held constant over each step, so steps land exactly on grid points.
    """
    if system is None:
        system = System(scenario, mode)
    sc = system.scenario
    dt = sc.dt if dt is None else float(dt)
    t_end = sc.t_end if t_end is None else float(t_end)
    if not dt > 0 or not t_end > 0:
        raise ValidationError("dt and t_end must be positive")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValidationError(f"t_end={t_end} is not a multiple of dt={dt}")

    x = system.zero_state() if initial_state is None else np.array(initial_state, dtype=float)
    if x.shape != (system.n_state,):
        raise ValidationError(f"initial state has {x.size} entries, expected {system.n_state}")
    system.check_finite(x, "initial state")
    system.check_eta_consistent(x[system.s_eta])

    # grid index -> load change
    changes = sorted({min(int(round(d.time / dt)), n_steps) for d in sc.disturbances} | {0})
    t = np.arange(n_steps + 1) * dt
    X = np.empty((n_steps + 1, system.n_state))
    X[0] = x
    for seg, start in enumerate(changes):
        stop = changes[seg + 1] if seg + 1 < len(changes) else n_steps
        p_load, h_load = system.loads_at_index(start, dt)
        rhs = system.compiled_rhs(p_load, h_load)
        for k in range(start, stop):
            x = rk4_step(rhs, x, dt)
            if not np.abs(x).max(initial=0.0) <= bound:
                system.check_finite(x, "state", t[k + 1])
                j = int(np.argmax(np.abs(x)))
                raise NumericalError(
                    f"state blew up at t={t[k + 1]:.6g}s: |{system.state_names[j]}| = {abs(x[j]):.3g} > {bound:g}"
                )
            X[k + 1] = x
    return Trajectory(system, t, X)
