"""Run reports, mode comparison and CSV/JSON serialisation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .control import passivity_audit
from .dispatch import (
    DispatchSolution,
    compute_equilibrium,
    dispatch_problem,
    objective_mode1,
    objective_mode2,
    simulated_dispatch,
    solve_dispatch,
    verify_power_sharing,
)
from .dynamics import Trajectory, simulate
from .errors import ChpError
from .metrics import max_deviation, settling_time, tail_mean

TAIL_FRACTION = 0.1


def trajectory_metrics(columns: dict, t_disturbance: float, band: float) -> dict:
    """Frequency metrics computed only from the named time series.

    Settling targets are tail means, so the same numbers come out of an
    in-memory trajectory and of its CSV file.
    """
    t = np.asarray(columns["t"], dtype=float)
    buses = [k for k in columns if k.startswith("omega_")]
    settle, peak, steady = {}, {}, {}
    for key in buses:
        label = key.split("_", 1)[1]
        sig = np.asarray(columns[key], dtype=float)
        steady[label] = tail_mean(sig, TAIL_FRACTION)
        settle[label] = settling_time(t, sig, steady[label], band, t_disturbance)
        peak[label] = max_deviation(t, sig, (t_disturbance, t[-1]))
    etas = [np.asarray(columns[k], dtype=float)[-1] for k in columns if k.startswith("eta_")]
    worst = max((abs(e) for e in etas), default=0.0)
    return {
        "settling_time": settle,
        "max_deviation": peak,
        "steady_omega": steady,
        "omega_bar": float(np.mean(list(steady.values()))) if steady else 0.0,
        "tbar": tail_mean(columns["Tbar"], TAIL_FRACTION),
        "security": {"secure": bool(worst < math.pi / 2), "margin": math.pi / 2 - worst},
    }


def audit_blocks(trajectory: Trajectory, equilibrium) -> list[dict]:
    """Dissipation-inequality audit of every generator and heat-source block."""
    sys_ = trajectory.system
    t = trajectory.t
    out = []
    xg = trajectory.states[:, sys_.s_gen]
    go = sys_._gen_offsets
    xg_star = equilibrium.state[sys_.s_gen]
    for i, blk in enumerate(sys_.gen_blocks):
        sl = slice(go[i], go[i + 1])
        bus = sys_.gen_bus[i]
        rep = passivity_audit(
            blk, t, trajectory.omega[:, bus], xg[:, sl],
            (equilibrium.omega_bar, xg_star[sl], equilibrium.p_gen[i]),
        )
        out.append({"block": f"generator@bus{bus + 1}", "kind": blk.name, **rep.as_dict()})
    xh = trajectory.states[:, sys_.s_src]
    so = sys_._src_offsets
    xh_star = equilibrium.state[sys_.s_src]
    for i, blk in enumerate(sys_.src_blocks):
        sl = slice(so[i], so[i + 1])
        rep = passivity_audit(
            blk, t, trajectory.tbar, xh[:, sl],
            (equilibrium.tbar, xh_star[sl], equilibrium.h_gen[i]),
        )
        out.append({"block": f"source@edge{sys_.src_edge[i] + 1}", "kind": blk.name, **rep.as_dict()})
    return out


@dataclass
class RunReport:
    scenario: str
    mode: int
    dt: float
    t_end: float
    settle_band: float
    t_disturbance: float
    settling_time: dict
    max_deviation: dict
    steady_omega: dict
    omega_bar: float
    tbar: float
    security: dict
    equilibrium: dict = field(default_factory=dict)
    dispatch: dict = field(default_factory=dict)
    passivity: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def dispatch_passed(self) -> bool:
        return bool(self.dispatch.get("passed", False))


def build_run_report(trajectory: Trajectory, band: float | None = None) -> RunReport:
    sys_ = trajectory.system
    sc = sys_.scenario
    band = sc.settle_band if band is None else band
    # a horizon shorter than the schedule only sees the steps inside it
    t_dist = max((d.time for d in sc.disturbances if d.time <= trajectory.t[-1]), default=0.0)
    metrics = trajectory_metrics(trajectory.columns(), t_dist, band)

    try:
        eq = compute_equilibrium(sys_)
        equilibrium = {
            "omega_bar": eq.omega_bar,
            "tbar": eq.tbar,
            "secure": eq.secure,
            "margin": eq.margin,
            "max_state_error": float(np.max(np.abs(trajectory.states[-1] - eq.state))),
        }
        audits = audit_blocks(trajectory, eq)
        passivity = {"all_passed": all(a["passed"] for a in audits), "blocks": audits}
    except ChpError as exc:
        equilibrium = {"error": str(exc)}
        passivity = {"error": str(exc)}

    try:
        prob = dispatch_problem(sc, sys_.mode)
        oracle = solve_dispatch(prob)
        dispatch = verify_power_sharing(trajectory, oracle).as_dict()
        dispatch["oracle"] = oracle.as_dict()
    except ChpError as exc:
        dispatch = {"passed": False, "error": str(exc)}

    return RunReport(
        scenario=sc.name,
        mode=sys_.mode,
        dt=float(trajectory.dt),
        t_end=float(trajectory.t[-1]),
        settle_band=band,
        t_disturbance=t_dist,
        equilibrium=equilibrium,
        dispatch=dispatch,
        passivity=passivity,
        **metrics,
    )


def _dispatch_from_values(values: dict) -> DispatchSolution:
    return DispatchSolution(
        p_gen=values["pG"], p_pump=values["pP"], p_unc=values["pU"],
        h_gen=values["hG"], h_pump=values["hP"],
    )


def compare_modes(scenario, *, dt=None, t_end=None, band=None) -> tuple[dict, dict]:
    """Run one disturbance under both pump modes and tabulate the outcomes.

    Objectives: ``C1 = C_{1,e} + C_{1,h}`` and the joint ``C2`` are both
    evaluated on each mode's settled dispatch.
    """
    prob1 = dispatch_problem(scenario, 1)
    prob2 = dispatch_problem(scenario, 2)
    result = {"scenario": scenario.name, "modes": {}}
    trajectories = {}
    for mode in (1, 2):
        traj = simulate(scenario, mode=mode, dt=dt, t_end=t_end)
        trajectories[mode] = traj
        rep = build_run_report(traj, band)
        values, _ = simulated_dispatch(traj, TAIL_FRACTION)
        outcome = _dispatch_from_values(values)
        row = {
            "settling_time": rep.settling_time,
            "max_deviation": rep.max_deviation,
            "omega_bar": rep.omega_bar,
            "tbar": rep.tbar,
            "dispatch": {k: v.tolist() for k, v in values.items()},
            "dispatch_verified": rep.dispatch_passed,
            "objective_C1": objective_mode1(outcome, prob1),
            "objective_C2": objective_mode2(outcome, prob2),
        }
        result["modes"][str(mode)] = row
    return result, trajectories



def write_csv(trajectory: Trajectory, path) -> Path:
    """Write the trajectory time series with 17 significant digits."""
    cols = trajectory.columns()
    path = Path(path)
    data = np.column_stack(list(cols.values()))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, k] for k, name in enumerate(header)}


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2) + "\n")
    return path
