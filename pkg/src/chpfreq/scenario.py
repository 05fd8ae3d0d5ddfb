"""Scenario definition and the TOML scenario-file loader.

Scenario files use one-based bus, line, node and edge labels (matching how
buses and edges are numbered in figures and reports). Everything is
converted to zero-based indices on load. Unknown keys are rejected so that a
misspelt physical parameter never silently falls back to a default.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .control import FirstOrderBlock, PassiveBlock, second_order_block, wrap_first_order_as_passive
from .errors import ChpError, ValidationError
from .network import (
    ElectricNetwork,
    HeatNetwork,
    PumpCoupling,
    attach_converter_bus,
    validate_networks,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1
BLOCK_KINDS = ("first_order", "second_order")

_SECTIONS = {
    "electric": {"inertia", "damping", "lines", "susceptance", "nominal_flow", "generators"},
    "heat": {"edges", "edge_types", "edge_volume", "node_volume", "mass_flow", "heat_load"},
    "coupling": {"pump_bus", "pump_edge", "cop", "mode1_gain", "mode2_coefficient",
                 "link_susceptance", "host_bus"},
    "control": {"mode", "generator_cost", "source_cost", "generator_block", "source_block",
                "second_order"},
    "sim": {"dt", "t_end", "settle_band"},
}
_TOP = {"schema_version", "name", "description", "disturbances", *_SECTIONS}
_REQUIRED = {
    "electric": {"inertia", "damping", "generators"},
    "heat": {"edges", "edge_types", "edge_volume", "node_volume", "mass_flow"},
    "control": {"generator_cost", "source_cost"},
}


@dataclass(frozen=True)
class Disturbance:
    """Step change ``magnitude`` applied at ``time`` to a bus load or an edge heat load."""

    time: float
    target: str
    index: int
    magnitude: float

    def __post_init__(self):
        if self.target not in ("bus", "edge"):
            raise ValidationError(f"disturbance target must be 'bus' or 'edge', got {self.target!r}")


@dataclass(frozen=True)
class Scenario:
    electric: ElectricNetwork
    heat: HeatNetwork
    coupling: PumpCoupling
    generator_cost: np.ndarray
    source_cost: np.ndarray
    mode: int = 1
    disturbances: tuple[Disturbance, ...] = ()
    dt: float = 1e-3
    t_end: float = 200.0
    settle_band: float = 2e-4
    link_susceptance: float | None = None
    host_buses: tuple[int, ...] | None = None
    generator_block: str = "first_order"
    source_block: str = "first_order"
    second_order: dict = field(default_factory=lambda: {"time_constants": (0.5, 3.0), "split": 0.5})
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "generator_cost", np.asarray(self.generator_cost, dtype=float))
        object.__setattr__(self, "source_cost", np.asarray(self.source_cost, dtype=float))
        object.__setattr__(self, "disturbances", tuple(self.disturbances))
        self._validate()

    def _validate(self):
        if self.mode not in (1, 2):
            raise ValidationError(f"mode must be 1 or 2, got {self.mode}")
        if len(self.generator_cost) != len(self.electric.generators):
            raise ValidationError("need one generator cost per generator")
        if len(self.source_cost) != len(self.heat.source_edges):
            raise ValidationError("need one source cost per conventional heat source edge")
        if np.any(self.generator_cost <= 0) or np.any(self.source_cost <= 0):
            raise ValidationError("cost coefficients must be positive")
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not self.t_end > 0:
            raise ValidationError("t_end must be positive")
        if not self.settle_band > 0:
            raise ValidationError("settle_band must be positive")
        for kind in (self.generator_block, self.source_block):
            if kind not in BLOCK_KINDS:
                raise ValidationError(f"unknown block kind {kind!r}; expected one of {BLOCK_KINDS}")
        loads = set(self.heat.load_edges.tolist())
        for d in self.disturbances:
            if not 0 <= d.time <= self.t_end:
                raise ValidationError(f"disturbance at t={d.time} lies outside [0, {self.t_end}]")
            if d.target == "bus" and not 0 <= d.index < self.electric.n_bus:
                raise ValidationError(f"disturbance bus {d.index + 1} does not exist")
            if d.target == "edge" and d.index not in loads:
                raise ValidationError(f"disturbance edge {d.index + 1} is not a load edge")
        if self.coupling.n_pumps and self.link_susceptance is not None and not self.link_susceptance > 0:
            raise ValidationError("link_susceptance must be positive")
        if self.mode == 2 and self.coupling.n_pumps and self.link_susceptance is None:
            raise ValidationError("mode 2 needs coupling.link_susceptance")

    @property
    def supports_mode2(self) -> bool:
        return self.coupling.n_pumps == 0 or self.link_susceptance is not None

    def with_mode(self, mode: int) -> "Scenario":
        return replace(self, mode=mode)

    def electric_for_mode(self, mode: int | None = None) -> ElectricNetwork:
        """Electric network as simulated: mode 2 adds one converter bus per pump."""
        mode = self.mode if mode is None else mode
        if mode == 1 or self.coupling.n_pumps == 0:
            return self.electric
        return attach_converter_bus(
            self.electric, self.coupling, self.link_susceptance, host_bus=self.host_buses
        )

    def _make_block(self, kind: str, cost: float) -> PassiveBlock:
        if kind == "second_order":
            p = self.second_order
            return second_order_block(cost, p.get("time_constants", (0.5, 3.0)), p.get("split", 0.5))
        return wrap_first_order_as_passive(FirstOrderBlock(cost))

    def generator_blocks(self) -> list[PassiveBlock]:
        return [self._make_block(self.generator_block, q) for q in self.generator_cost]

    def source_blocks(self) -> list[PassiveBlock]:
        return [self._make_block(self.source_block, q) for q in self.source_cost]

    @property
    def last_disturbance_time(self) -> float:
        return max((d.time for d in self.disturbances), default=0.0)


def _check_keys(where: str, table: dict, allowed: set, required: set = frozenset()):
    unknown = set(table) - allowed
    if unknown:
        raise ValidationError(f"[{where}] unknown field(s): {', '.join(sorted(unknown))}")
    missing = set(required) - set(table)
    if missing:
        raise ValidationError(f"[{where}] missing field(s): {', '.join(sorted(missing))}")


def _zero_based(values, where: str):
    arr = np.asarray(values, dtype=int)
    if arr.size and arr.min() < 1:
        raise ValidationError(f"{where}: labels are one-based")
    return arr - 1


def scenario_from_dict(data: dict, name: str = "") -> Scenario:
    """Build a :class:`Scenario` from the parsed TOML document."""
    _check_keys("top level", data, _TOP, {"schema_version", "electric", "heat", "control"})
    if data["schema_version"] != SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported schema_version {data['schema_version']}; expected {SCHEMA_VERSION}"
        )
    for section, allowed in _SECTIONS.items():
        if section in data:
            if not isinstance(data[section], dict):
                raise ValidationError(f"[{section}] must be a table")
            _check_keys(section, data[section], allowed, _REQUIRED.get(section, set()))

    el = data["electric"]
    lines = _zero_based(el.get("lines", []), "electric.lines").reshape(-1, 2)
    electric_spec = {
        "inertia": el["inertia"],
        "damping": el["damping"],
        "lines": lines,
        "susceptance": el.get("susceptance", []),
        "nominal_flow": el.get("nominal_flow", [0.0] * len(lines)),
        "generators": _zero_based(el["generators"], "electric.generators"),
    }

    ht = data["heat"]
    edges = _zero_based(ht["edges"], "heat.edges").reshape(-1, 2)
    heat_load = np.zeros(len(edges))
    types = list(ht["edge_types"])
    load_idx = [j for j, t in enumerate(types) if t == "load"]
    if "heat_load" in ht:
        hl = np.asarray(ht["heat_load"], dtype=float)
        if hl.shape != (len(load_idx),):
            raise ValidationError("heat.heat_load needs one value per load edge, in edge order")
        heat_load[load_idx] = hl
    heat_spec = {
        "edges": edges,
        "edge_types": types,
        "edge_volume": ht["edge_volume"],
        "node_volume": ht["node_volume"],
        "mass_flow": ht["mass_flow"],
        "heat_load": heat_load,
    }

    cp = data.get("coupling", {})
    coupling_spec = {
        "buses": _zero_based(cp.get("pump_bus", []), "coupling.pump_bus"),
        "edges": _zero_based(cp.get("pump_edge", []), "coupling.pump_edge"),
        "cop": cp.get("cop", []),
        "mode1_gain": cp.get("mode1_gain", []),
        "mode2_coefficient": cp.get("mode2_coefficient", []),
    }
    electric, heat, coupling = validate_networks(electric_spec, heat_spec, coupling_spec)
    host = cp.get("host_bus")
    if host is not None:
        host = tuple(_zero_based(np.atleast_1d(host), "coupling.host_bus").tolist())

    ctl = data["control"]
    so = dict(ctl.get("second_order", {}))
    _check_keys("control.second_order", so, {"time_constants", "split"})

    disturbances = []
    entries = data.get("disturbances", [])
    if not isinstance(entries, list) or not all(isinstance(e, dict) for e in entries):
        raise ValidationError("disturbances must be an array of tables ([[disturbances]])")
    for k, entry in enumerate(entries):
        where = f"disturbances[{k}]"
        _check_keys(where, entry, {"t", "bus", "edge", "dp", "dh"}, {"t"})
        if ("bus" in entry) == ("edge" in entry):
            raise ValidationError(f"{where}: give exactly one of 'bus' or 'edge'")
        if "bus" in entry:
            if "dp" not in entry or "dh" in entry:
                raise ValidationError(f"{where}: bus disturbances take 'dp'")
            disturbances.append(Disturbance(float(entry["t"]), "bus", int(entry["bus"]) - 1, float(entry["dp"])))
        else:
            if "dh" not in entry or "dp" in entry:
                raise ValidationError(f"{where}: edge disturbances take 'dh'")
            disturbances.append(Disturbance(float(entry["t"]), "edge", int(entry["edge"]) - 1, float(entry["dh"])))

    sim = data.get("sim", {})
    kwargs = {}
    for key in ("dt", "t_end", "settle_band"):
        if key in sim:
            kwargs[key] = float(sim[key])
    if "time_constants" in so:
        so["time_constants"] = tuple(float(v) for v in so["time_constants"])
    return Scenario(
        electric=electric,
        heat=heat,
        coupling=coupling,
        generator_cost=ctl["generator_cost"],
        source_cost=ctl["source_cost"],
        mode=int(ctl.get("mode", 1)),
        disturbances=disturbances,
        link_susceptance=None if "link_susceptance" not in cp else float(cp["link_susceptance"]),
        host_buses=host,
        generator_block=ctl.get("generator_block", "first_order"),
        source_block=ctl.get("source_block", "first_order"),
        second_order=so or {"time_constants": (0.5, 3.0), "split": 0.5},
        name=data.get("name", name),
        **kwargs,
    )


def fixture_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("chpfreq.data").iterdir() if p.name.endswith(".toml"))


def resolve_scenario_path(path_or_name) -> Path:
    """Accept a file path or the name of a shipped fixture such as ``paper_mode1``."""
    p = Path(path_or_name)
    if p.exists():
        return p
    candidate = resources.files("chpfreq.data") / f"{p.name.removesuffix('.toml')}.toml"
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"no scenario file or fixture named {path_or_name!r}")


def load_scenario(path_or_name) -> Scenario:
    path = resolve_scenario_path(path_or_name)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    try:
        return scenario_from_dict(data, name=path.stem)
    except KeyError as exc:
        raise ValidationError(f"{path}: missing field {exc}") from None
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ChpError):
            raise
        raise ValidationError(f"{path}: {exc}") from None
