"""Equilibria, optimal power-sharing problems and steady-state certification.

The dispatch problems are equality-constrained quadratic programs solved
through their KKT systems with a small Gaussian elimination written here, so
the optimizer shares no numerics with the simulator it is used to check.

Multiplier convention: stationarity reads ``H x = A^T lam``. For the
electric balance this makes ``lam_e = Q_e p^G = -omega_bar`` at the optimum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from .control import block_steady_state
from .errors import NumericalError, SingularKKTError, UnsettledTrajectoryError, ValidationError

BALANCE_TOL = 1e-10


# -- linear algebra -----------------------------------------------------------


def gauss_solve(K, rhs, rel_tol: float = 1e-13) -> np.ndarray:
    """Solve ``K z = rhs`` by Gaussian elimination with partial pivoting."""
    M = np.array(K, dtype=float)
    z = np.array(rhs, dtype=float)
    n = len(z)
    if M.shape != (n, n):
        raise ValueError("matrix must be square and match the right-hand side")
    scale = max(float(np.max(np.abs(M))) if n else 0.0, 1.0)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(M[col:, col])))
        if abs(M[piv, col]) <= rel_tol * scale:
            raise SingularKKTError(f"KKT matrix is singular (pivot {M[piv, col]:.3g} in column {col})")
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
            z[[col, piv]] = z[[piv, col]]
        factors = M[col + 1:, col] / M[col, col]
        M[col + 1:, col:] -= np.outer(factors, M[col, col:])
        z[col + 1:] -= factors * z[col]
    out = np.zeros(n)
    for row in range(n - 1, -1, -1):
        out[row] = (z[row] - M[row, row + 1:] @ out[row + 1:]) / M[row, row]
    return out


def solve_equality_qp(H, A, b):
    """Minimise ``x^T H x / 2`` subject to ``A x = b``.

    Returns ``(x, lam)`` with ``H x = A^T lam``.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    n, m = H.shape[0], A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = -A.T
    K[n:, :n] = A
    z = gauss_solve(K, np.concatenate([np.zeros(n), b]))
    return z[:n], z[n:]


# -- problem data ---------------------------------------------------------------


@dataclass(frozen=True)
class DispatchProblem:
    """Cost and demand data for the sharing problems of one pump mode.

    ``damping`` covers the buses with frequency-dependent load in the
    simulated network (converter buses excluded). Totals are the post-step
    demand deviations.
    """

    mode: int
    gen_cost: np.ndarray
    source_cost: np.ndarray
    damping: np.ndarray
    pump_gain: np.ndarray
    cop: np.ndarray
    m: np.ndarray
    p_load: float
    h_load: float

    @property
    def n_pumps(self) -> int:
        return len(self.cop)

    @property
    def common_cop(self) -> float:
        if self.n_pumps == 0:
            return 1.0
        if not np.all(self.cop == self.cop[0]):
            warnings.warn("heat pumps have different CoP; using the mean in the joint cost weight")
        return float(np.mean(self.cop))

    @property
    def common_m(self) -> float:
        if self.n_pumps == 0:
            return 1.0
        if not np.all(self.m == self.m[0]):
            raise ValidationError("mode 2 equilibrium analysis needs a common converter coefficient m")
        return float(self.m[0])

    @property
    def heat_weight(self) -> float:
        """Scalar ``m / C_o`` multiplying the heat cost in the joint problem."""
        if self.mode == 1 or self.n_pumps == 0:
            return 1.0
        return self.common_m / self.common_cop


def final_loads(scenario) -> tuple[np.ndarray, np.ndarray]:
    """Bus and edge loads once every scheduled step has been applied."""
    p = np.zeros(scenario.electric.n_bus)
    h = np.array(scenario.heat.heat_load, dtype=float)
    for d in scenario.disturbances:
        if d.target == "bus":
            p[d.index] += d.magnitude
        else:
            h[d.index] += d.magnitude
    return p, h


def dispatch_problem(scenario, mode: int | None = None) -> DispatchProblem:
    mode = scenario.mode if mode is None else mode
    electric = scenario.electric_for_mode(mode)
    p, h = final_loads(scenario)
    cp = scenario.coupling
    return DispatchProblem(
        mode=mode,
        gen_cost=np.asarray(scenario.generator_cost, dtype=float),
        source_cost=np.asarray(scenario.source_cost, dtype=float),
        damping=np.asarray(electric.damping[electric.inertial_buses], dtype=float),
        pump_gain=np.asarray(cp.mode1_gain, dtype=float),
        cop=np.asarray(cp.cop, dtype=float),
        m=np.asarray(cp.mode2_coefficient, dtype=float),
        p_load=float(p.sum()),
        h_load=float(h.sum()),
    )


@dataclass
class DispatchSolution:
    p_gen: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_pump: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_unc: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h_gen: np.ndarray = field(default_factory=lambda: np.zeros(0))
    h_pump: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lambda_e: float = 0.0
    lambda_h: float = 0.0
    coupling_multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = 0.0
    mode: int = 1

    @classmethod
    def combine(cls, electric: "DispatchSolution", heat: "DispatchSolution") -> "DispatchSolution":
        return cls(
            p_gen=electric.p_gen, p_pump=electric.p_pump, p_unc=electric.p_unc,
            h_gen=heat.h_gen, h_pump=heat.h_pump,
            lambda_e=electric.lambda_e, lambda_h=heat.lambda_h,
            objective=electric.objective + heat.objective, mode=electric.mode,
        )

    def quantities(self) -> dict[str, np.ndarray]:
        return {"pG": self.p_gen, "pP": self.p_pump, "pU": self.p_unc, "hG": self.h_gen, "hP": self.h_pump}

    def as_dict(self) -> dict:
        d = {k: v.tolist() for k, v in self.quantities().items()}
        d.update(lambda_e=self.lambda_e, lambda_h=self.lambda_h, objective=self.objective, mode=self.mode)
        return d


def objective_mode1(sol: DispatchSolution, prob: DispatchProblem) -> float:
    """``C_{1,e} + C_{1,h}``: pump and damping terms carry virtual costs ``1/a`` and ``1/D``."""
    return 0.5 * float(
        sol.p_gen @ (prob.gen_cost * sol.p_gen)
        + sol.p_pump @ (sol.p_pump / prob.pump_gain)
        + sol.p_unc @ (sol.p_unc / prob.damping)
        + sol.h_gen @ (prob.source_cost * sol.h_gen)
    )


def objective_mode2(sol: DispatchSolution, prob: DispatchProblem) -> float:
    """Joint cost with the heat term weighted by ``m / C_o``."""
    w = _joint_weight(prob)
    return 0.5 * float(
        sol.p_gen @ (prob.gen_cost * sol.p_gen)
        + w * sol.h_gen @ (prob.source_cost * sol.h_gen)
        + sol.p_unc @ (sol.p_unc / prob.damping)
    )


def _joint_weight(prob: DispatchProblem) -> float:
    if prob.n_pumps == 0:
        return 1.0
    return float(prob.m[0]) / prob.common_cop


# -- optimisers -----------------------------------------------------------------


def solve_dispatch_mode1(prob: DispatchProblem) -> tuple[DispatchSolution, DispatchSolution]:
    """Separate electric and heat sharing problems.

    Electric: min ``1/2 (pG Qe pG + pP Qp pP + pU Qu pU)`` s.t.
    ``sum pG = sum pL + sum pP + sum pU`` with ``Qp = 1/a`` and ``Qu = 1/D``.
    Heat: min ``1/2 hG Qh hG`` s.t. ``sum hG = sum hL - sum hP`` where the
    pump heat comes from the electric solution.
    """
    ng, npump, nu = len(prob.gen_cost), len(prob.pump_gain), len(prob.damping)
    H = np.diag(np.concatenate([prob.gen_cost, 1.0 / prob.pump_gain, 1.0 / prob.damping]))
    A = np.concatenate([np.ones(ng), -np.ones(npump), -np.ones(nu)])[None, :]
    x, lam = solve_equality_qp(H, A, [prob.p_load])
    pG, pP, pU = x[:ng], x[ng:ng + npump], x[ng + npump:]
    electric = DispatchSolution(
        p_gen=pG, p_pump=pP, p_unc=pU, lambda_e=float(lam[0]),
        objective=0.5 * float(x @ H @ x), mode=1,
    )
    hP = prob.cop * pP
    Hh = np.diag(prob.source_cost)
    hG, mu = solve_equality_qp(Hh, np.ones((1, len(prob.source_cost))), [prob.h_load - hP.sum()])
    heat = DispatchSolution(h_gen=hG, h_pump=hP, lambda_h=float(mu[0]),
                            objective=0.5 * float(hG @ Hh @ hG), mode=1)
    return electric, heat


def solve_dispatch_mode2(prob: DispatchProblem) -> DispatchSolution:
    """Joint sharing problem over ``(pG, hG, pU, pP, hP)``.

    min ``1/2 (pG Qe pG + (m/C_o) hG Qh hG + pU Qu pU)`` s.t. electric
    balance, heat balance ``sum hG = sum hL - sum hP`` and ``hP_k = C_o pP_k``.
    More than one pump leaves the split between pumps undetermined and the
    KKT matrix singular.
    """
    ng, ns, nu, npump = len(prob.gen_cost), len(prob.source_cost), len(prob.damping), prob.n_pumps
    w = prob.heat_weight
    n = ng + ns + nu + 2 * npump
    H = np.zeros((n, n))
    H[:ng + ns + nu, :ng + ns + nu] = np.diag(
        np.concatenate([prob.gen_cost, w * prob.source_cost, 1.0 / prob.damping])
    )
    s_g, s_h, s_u = slice(0, ng), slice(ng, ng + ns), slice(ng + ns, ng + ns + nu)
    s_pp = slice(ng + ns + nu, ng + ns + nu + npump)
    s_hp = slice(ng + ns + nu + npump, n)
    A = np.zeros((2 + npump, n))
    A[0, s_g], A[0, s_u], A[0, s_pp] = 1.0, -1.0, -1.0
    A[1, s_h], A[1, s_hp] = 1.0, 1.0
    for k in range(npump):
        A[2 + k, s_pp.start + k] = -prob.cop[k]
        A[2 + k, s_hp.start + k] = 1.0
    b = np.concatenate([[prob.p_load, prob.h_load], np.zeros(npump)])
    x, lam = solve_equality_qp(H, A, b)
    return DispatchSolution(
        p_gen=x[s_g], h_gen=x[s_h], p_unc=x[s_u], p_pump=x[s_pp], h_pump=x[s_hp],
        lambda_e=float(lam[0]), lambda_h=float(lam[1]), coupling_multipliers=lam[2:],
        objective=0.5 * float(x @ H @ x), mode=2,
    )


def solve_dispatch(prob: DispatchProblem) -> DispatchSolution:
    if prob.mode == 1:
        return DispatchSolution.combine(*solve_dispatch_mode1(prob))
    return solve_dispatch_mode2(prob)


def kkt_residuals(sol: DispatchSolution, prob: DispatchProblem) -> dict[str, float]:
    """Stationarity and primal feasibility residuals of an oracle solution."""
    lam_e, lam_h = sol.lambda_e, sol.lambda_h
    stat = [prob.gen_cost * sol.p_gen - lam_e, sol.p_unc / prob.damping + lam_e]
    elec = sol.p_gen.sum() - prob.p_load - sol.p_pump.sum() - sol.p_unc.sum()
    heat = sol.h_gen.sum() - prob.h_load + sol.h_pump.sum()
    if prob.mode == 1:
        stat += [sol.p_pump / prob.pump_gain + lam_e, prob.source_cost * sol.h_gen - lam_h]
        coupling = sol.h_pump - prob.cop * sol.p_pump
    else:
        stat += [prob.heat_weight * prob.source_cost * sol.h_gen - lam_h]
        if prob.n_pumps:
            stat += [[lam_e - prob.common_cop * lam_h]]
        coupling = sol.h_pump - prob.cop * sol.p_pump
    stationarity = max((float(np.max(np.abs(s))) for s in stat if len(s)), default=0.0)
    primal = max(abs(elec), abs(heat), float(np.max(np.abs(coupling), initial=0.0)))
    return {"stationarity": stationarity, "primal": primal}


# -- general convex costs -------------------------------------------------------


def _bisect_increasing(fn, target: float, lo=-1.0, hi=1.0, max_expand=200, what="value"):
    """Root of ``fn(y) = target`` for increasing ``fn``, bracketed by doubling."""
    for _ in range(max_expand):
        if fn(lo) <= target:
            break
        lo *= 2.0
    else:
        raise NumericalError(f"could not bracket {what} {target!r} from below")
    for _ in range(max_expand):
        if fn(hi) >= target:
            break
        hi *= 2.0
    else:
        raise NumericalError(f"could not bracket {what} {target!r} from above")
    for _ in range(3000):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if fn(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _inverse(marginal):
    def inv(lam):
        return _bisect_increasing(marginal, lam, what="marginal cost")
    return inv


def generalized_dispatch(prob: DispatchProblem, gen_marginals=None, source_marginals=None) -> DispatchSolution:
    """Sharing with strictly convex costs given by their marginals.

    Each source produces ``(C')^{-1}(lambda)`` at the common multiplier,
    which is found by bisection on the aggregate balance residual. Omitted
    marginals default to the quadratic ``C'(y) = Q y``.
    """
    gen_marginals = gen_marginals or [lambda y, q=q: q * y for q in prob.gen_cost]
    source_marginals = source_marginals or [lambda y, q=q: q * y for q in prob.source_cost]
    if len(gen_marginals) != len(prob.gen_cost) or len(source_marginals) != len(prob.source_cost):
        raise ValidationError("need one marginal cost function per generator and per heat source")
    g_inv = [_inverse(c) for c in gen_marginals]
    s_inv = [_inverse(c) for c in source_marginals]
    sum_d, sum_a = float(prob.damping.sum()), float(prob.pump_gain.sum())

    def gens(lam):
        return np.array([f(lam) for f in g_inv])

    def sources(mu):
        return np.array([f(mu) for f in s_inv])

    if prob.mode == 1:
        lam = _bisect_increasing(
            lambda l: gens(l).sum() + l * (sum_a + sum_d), prob.p_load, what="electric demand"
        )
        pP = -lam * prob.pump_gain
        hP = prob.cop * pP
        mu = _bisect_increasing(lambda v: sources(v).sum(), prob.h_load - hP.sum(), what="heat demand")
        sol = DispatchSolution(
            p_gen=gens(lam), p_pump=pP, p_unc=-lam * prob.damping, h_gen=sources(mu), h_pump=hP,
            lambda_e=lam, lambda_h=mu, mode=1,
        )
        return sol

    if prob.n_pumps > 1:
        raise SingularKKTError("joint dispatch with several pumps leaves the pump split undetermined")
    if prob.n_pumps == 0:
        sol = generalized_dispatch(
            DispatchProblem(1, prob.gen_cost, prob.source_cost, prob.damping, prob.pump_gain,
                            prob.cop, prob.m, prob.p_load, prob.h_load),
            gen_marginals, source_marginals,
        )
        sol.mode = 2
        return sol
    m, cop = prob.common_m, prob.common_cop

    def residual(l):
        return gens(l).sum() + l * sum_d + sources(l / m).sum() / cop

    lam = _bisect_increasing(residual, prob.p_load + prob.h_load / cop, what="joint demand")
    hG = sources(lam / m)
    hP = np.array([prob.h_load - hG.sum()])
    return DispatchSolution(
        p_gen=gens(lam), p_pump=hP / prob.cop, p_unc=-lam * prob.damping, h_gen=hG, h_pump=hP,
        lambda_e=lam, lambda_h=lam / cop, mode=2,
    )


# -- equilibria -----------------------------------------------------------------


def _aggregate_droop(prob: DispatchProblem) -> float:
    return float(np.sum(1.0 / prob.gen_cost) + prob.damping.sum())


def equilibrium_scalars_mode1(scenario_or_problem) -> tuple[float, float]:
    """Synchronous frequency and average temperature under frequency-dependent pumps."""
    prob = _as_problem(scenario_or_problem, 1)
    denom = _aggregate_droop(prob) + float(prob.pump_gain.sum())
    if denom == 0:
        raise NumericalError("zero aggregate electric droop")
    omega = -prob.p_load / denom
    hP = prob.cop * prob.pump_gain * omega
    src = float(np.sum(1.0 / prob.source_cost))
    if src == 0:
        if abs(prob.h_load - hP.sum()) > 0:
            raise NumericalError("no heat sources to balance the heat demand")
        return omega, 0.0
    tbar = -(prob.h_load - hP.sum()) / src
    return omega, tbar


def equilibrium_scalars_mode2(scenario_or_problem) -> tuple[float, float]:
    """Synchronous frequency and average temperature with converter-linked pumps.

    Eliminating ``Tbar = omega/m``, ``pG = -omega/Qe``, ``pU = D omega``,
    ``hG = -omega/(m Qh)`` and ``sum pP = (sum hL - sum hG)/C_o`` from the
    electric balance leaves one linear equation in ``omega``.
    """
    prob = _as_problem(scenario_or_problem, 2)
    if prob.n_pumps == 0:
        return equilibrium_scalars_mode1(prob)
    m, cop = prob.common_m, prob.common_cop
    denom = _aggregate_droop(prob) + float(np.sum(1.0 / prob.source_cost)) / (m * cop)
    if denom == 0:
        raise NumericalError("degenerate mode 2 equilibrium: all droops vanish")
    omega = -(prob.p_load + prob.h_load / cop) / denom
    return omega, omega / m


def _as_problem(obj, mode) -> DispatchProblem:
    if isinstance(obj, DispatchProblem):
        if obj.mode != mode:
            obj = DispatchProblem(mode, *(getattr(obj, f) for f in (
                "gen_cost", "source_cost", "damping", "pump_gain", "cop", "m", "p_load", "h_load")))
        return obj
    return dispatch_problem(obj, mode)


@dataclass
class EquilibriumPoint:
    omega_bar: float
    tbar: float
    state: np.ndarray
    eta: np.ndarray
    secure: bool
    margin: float
    p_gen: np.ndarray
    h_gen: np.ndarray
    p_pump: np.ndarray


def check_security(eq_or_eta) -> tuple[bool, float]:
    """Strict ``|eta| < pi/2`` on every line, with the remaining margin."""
    eta = eq_or_eta.eta if isinstance(eq_or_eta, EquilibriumPoint) else np.asarray(eq_or_eta, dtype=float)
    worst = float(np.max(np.abs(eta), initial=0.0))
    margin = math.pi / 2 - worst
    return bool(margin > 0), margin


def _solve_angles(system, injection) -> np.ndarray:
    """Bus angles (bus 0 as reference) whose line flows deliver ``injection``."""
    E = system.E
    B, pnom = system.electric.susceptance, system.electric.nominal_flow
    n = system.n_bus
    if n == 1:
        return np.zeros(1)
    if abs(injection.sum()) > 1e-9:
        raise NumericalError(f"bus injections do not sum to zero ({injection.sum():.3g})")
    # DC-flow initial guess
    L = E.T @ (B[:, None] * E)
    theta0 = np.zeros(n)
    theta0[1:] = np.linalg.solve(L[1:, 1:], injection[1:] + (E.T @ pnom)[1:])

    def fun(th):
        full = np.concatenate([[0.0], th])
        return (E.T @ (B * np.sin(E @ full) - pnom))[1:] - injection[1:]

    def jac(th):
        full = np.concatenate([[0.0], th])
        J = E.T @ ((B * np.cos(E @ full))[:, None] * E)
        return J[1:, 1:]

    sol = root(fun, theta0[1:], jac=jac, method="hybr", options={"xtol": 1e-14})
    if not sol.success or np.max(np.abs(fun(sol.x))) > 1e-11:
        raise NumericalError(f"no power-flow solution for the equilibrium injections: {sol.message}")
    return np.concatenate([[0.0], sol.x])


def compute_equilibrium(system) -> EquilibriumPoint:
    """Full equilibrium state of a compiled system after every scheduled step."""
    sc = system.scenario
    prob = dispatch_problem(sc, system.mode)
    if system.mode == 1:
        omega, tbar = equilibrium_scalars_mode1(prob)
    else:
        omega, tbar = equilibrium_scalars_mode2(prob)
    p_load, h_load = final_loads(sc)
    if system.mode == 2 and len(system.conv):
        p_load = np.concatenate([p_load, np.zeros(len(system.conv))])

    xg = [block_steady_state(b, omega) for b in system.gen_blocks]
    pG = np.array([b.output(x, omega) for b, x in zip(system.gen_blocks, xg)])
    xh = [block_steady_state(b, tbar) for b in system.src_blocks]
    hG = np.array([b.output(x, tbar) for b, x in zip(system.src_blocks, xh)])

    if system.mode == 1:
        pP = system.a1 * omega
    else:
        n_p = system.coupling.n_pumps
        if n_p > 1:
            raise NumericalError("mode 2 equilibria with several converter buses are not isolated")
        pP = (h_load.sum() - hG.sum()) / system.cop if n_p else np.zeros(0)

    injection = -p_load - system.electric.damping * omega
    np.add.at(injection, system.gen_bus, pG)
    np.subtract.at(injection, system.pump_bus, pP)
    if system.mode == 2:
        injection[system.conv] = -pP
    theta = _solve_angles(system, injection)
    eta = system.E @ theta

    heat_in = -h_load.copy()
    np.add.at(heat_in, system.src_edge, hG)
    np.add.at(heat_in, system.pump_edge, system.cop * pP)
    rhs = np.concatenate([heat_in, np.zeros(system.heat.n_nodes), [system.total_volume * tbar]])
    lhs = np.vstack([system.Ah, system.vol[None, :]])
    T, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    if np.max(np.abs(lhs @ T - rhs)) > 1e-10:
        raise NumericalError("heat equilibrium is inconsistent with the injected heat")

    x = np.concatenate([
        eta,
        np.full(system.n_omega, omega),
        np.concatenate(xg) if xg else np.zeros(0),
        T,
        np.concatenate(xh) if xh else np.zeros(0),
    ])
    secure, margin = check_security(eta)
    return EquilibriumPoint(omega, tbar, x, eta, secure, margin, pG, hG, np.atleast_1d(pP))


# -- certification --------------------------------------------------------------


@dataclass
class OptimalityReport:
    passed: bool
    tolerance: float
    max_abs_diff: float
    rows: list[dict]
    marginal_spread: dict[str, float]
    settling_peak_to_peak: float
    mode: int

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mode": self.mode,
            "tolerance": self.tolerance,
            "max_abs_diff": self.max_abs_diff,
            "settling_peak_to_peak": self.settling_peak_to_peak,
            "marginal_spread": dict(self.marginal_spread),
            "rows": list(self.rows),
        }


def simulated_dispatch(trajectory, tail_fraction: float = 0.1) -> tuple[dict[str, np.ndarray], float]:
    """Tail means of the dispatch quantities and their worst peak-to-peak spread."""
    sys_ = trajectory.system
    n = len(trajectory.t)
    start = min(n - 1, int(math.floor((1.0 - tail_fraction) * (n - 1))))
    damped = sys_.electric.inertial_buses
    series = {
        "pG": trajectory.p_gen,
        "pP": trajectory.p_pump,
        "pU": trajectory.p_uncontrolled[:, damped],
        "hG": trajectory.h_gen,
        "hP": trajectory.h_pump,
    }
    tails = {k: v[start:] for k, v in series.items()}
    ptp = max((float(np.max(np.ptp(v, axis=0))) for v in tails.values() if v.size), default=0.0)
    return {k: v.mean(axis=0) for k, v in tails.items()}, ptp


def marginal_spreads(values: dict[str, np.ndarray], prob: DispatchProblem) -> dict[str, float]:
    def spread(v):
        return float(np.max(np.abs(v - np.median(v)))) if len(v) else 0.0

    return {
        "generators": spread(prob.gen_cost * values["pG"]),
        "heat_sources": spread(prob.heat_weight * prob.source_cost * values["hG"]),
    }


def verify_power_sharing(
    trajectory,
    solution: DispatchSolution,
    tolerance: float = 1e-4,
    *,
    tail_fraction: float = 0.1,
    settle_tol: float = 1e-6,
) -> OptimalityReport:
    """Compare the settled trajectory tail with an oracle dispatch.

    Refuses to certify (raises :class:`UnsettledTrajectoryError`) unless every
    compared quantity has peak-to-peak below ``settle_tol`` over the tail.
    """
    sim, ptp = simulated_dispatch(trajectory, tail_fraction)
    if ptp >= settle_tol:
        raise UnsettledTrajectoryError(
            f"trajectory not settled: tail peak-to-peak {ptp:.3g} >= {settle_tol:g}; extend t_end"
        )
    prob = dispatch_problem(trajectory.system.scenario, trajectory.system.mode)
    oracle = solution.quantities()
    rows, worst = [], 0.0
    for key, sim_v in sim.items():
        ora_v = np.asarray(oracle[key], dtype=float)
        if ora_v.shape != sim_v.shape:
            raise ValidationError(f"oracle {key} has shape {ora_v.shape}, simulation {sim_v.shape}")
        for i, (s, o) in enumerate(zip(sim_v, ora_v)):
            d = abs(float(s) - float(o))
            worst = max(worst, d)
            rows.append({"quantity": f"{key}[{i}]", "simulated": float(s), "oracle": float(o), "abs_diff": d})
    return OptimalityReport(
        passed=worst < tolerance,
        tolerance=tolerance,
        max_abs_diff=worst,
        rows=rows,
        marginal_spread=marginal_spreads(sim, prob),
        settling_peak_to_peak=ptp,
        mode=trajectory.system.mode,
    )
