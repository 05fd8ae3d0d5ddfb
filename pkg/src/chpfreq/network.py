"""Electric and heating network topologies and their constant matrices.

Indices are zero-based throughout the library. Scenario files use one-based
labels; the conversion happens in :mod:`chpfreq.scenario`.

Heating incidence convention: row ``j`` of ``B_h`` has ``+1`` at the head
node of edge ``j`` and ``-1`` at its tail node. Edges point along the mass
flow, so the tail node is the edge inlet whose temperature drives the edge
temperature dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError

PUMP = "pump"
SOURCE = "source"
LOAD = "load"
EDGE_TYPES = (PUMP, SOURCE, LOAD)

FLOW_BALANCE_TOL = 1e-9


def _frozen(values, dtype=float, ndim=1) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.size == 0:
        arr = arr.reshape((0,) * ndim if ndim == 1 else (0, 2))
    arr.setflags(write=False)
    return arr


def _connected(n_nodes: int, pairs: np.ndarray) -> bool:
    if n_nodes <= 1:
        return True
    if len(pairs) == 0:
        return False
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n_nodes, n_nodes)
    )
    n_comp, _ = connected_components(graph, directed=False)
    return n_comp == 1


@dataclass(frozen=True)
class ElectricNetwork:
    """Buses, oriented lossless lines, generators and heat-pump buses.

    ``converters`` lists the zero-inertia buses added for converter-linked
    pumps, in pump order. It is empty for a network built from scenario data.
    """

    inertia: np.ndarray
    damping: np.ndarray
    lines: np.ndarray
    susceptance: np.ndarray
    nominal_flow: np.ndarray
    generators: tuple[int, ...] = ()
    pump_buses: tuple[int, ...] = ()
    converters: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inertia", _frozen(self.inertia))
        object.__setattr__(self, "damping", _frozen(self.damping))
        object.__setattr__(self, "lines", _frozen(self.lines, dtype=int, ndim=2))
        object.__setattr__(self, "susceptance", _frozen(self.susceptance))
        object.__setattr__(self, "nominal_flow", _frozen(self.nominal_flow))
        object.__setattr__(self, "generators", tuple(int(g) for g in self.generators))
        object.__setattr__(self, "pump_buses", tuple(int(p) for p in self.pump_buses))
        object.__setattr__(self, "converters", tuple(int(c) for c in self.converters))
        self._validate()

    def _validate(self):
        n = self.n_bus
        if n < 1:
            raise ValidationError("electric network needs at least one bus")
        if self.damping.shape != (n,):
            raise ValidationError(f"damping has {self.damping.size} entries for {n} buses")
        n_lines = len(self.lines)
        if self.lines.ndim != 2 or (n_lines and self.lines.shape[1] != 2):
            raise ValidationError("lines must be a list of (from, to) bus pairs")
        if self.susceptance.shape != (n_lines,) or self.nominal_flow.shape != (n_lines,):
            raise ValidationError("susceptance/nominal_flow length must equal line count")
        if n_lines and (self.lines.min() < 0 or self.lines.max() >= n):
            raise ValidationError("line references a bus that does not exist")
        seen = set()
        for i, j in self.lines:
            if i == j:
                raise ValidationError(f"line ({i}, {j}) is a self loop")
            if (i, j) in seen or (j, i) in seen:
                raise ValidationError(f"line ({i}, {j}) duplicated or present in both orientations")
            seen.add((i, j))
        if np.any(self.susceptance <= 0):
            raise ValidationError("line susceptances must be positive")
        if not _connected(n, self.lines):
            raise ValidationError("electric network is not connected")

        conv = set(self.converters)
        for idx in (*self.generators, *self.pump_buses, *self.converters):
            if not 0 <= idx < n:
                raise ValidationError(f"bus index {idx} out of range")
        if len(set(self.generators)) != len(self.generators):
            raise ValidationError("duplicate generator bus")
        inertial = np.array([b not in conv for b in range(n)])
        if np.any(self.inertia[inertial] <= 0):
            raise ValidationError("inertia must be positive on every non-converter bus")
        if np.any(self.damping[inertial] <= 0):
            raise ValidationError("damping must be positive on every non-converter bus")
        if np.any(self.inertia[~inertial] != 0) or np.any(self.damping[~inertial] != 0):
            raise ValidationError("converter buses carry no inertia or damping")
        if conv & set(self.generators):
            raise ValidationError("a converter bus cannot host a generator")

    @property
    def n_bus(self) -> int:
        return len(self.inertia)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def inertial_buses(self) -> np.ndarray:
        conv = set(self.converters)
        return np.array([b for b in range(self.n_bus) if b not in conv], dtype=int)

    @property
    def incidence(self) -> np.ndarray:
        """Line-by-bus matrix with +1 at the sending and -1 at the receiving bus."""
        E = np.zeros((self.n_lines, self.n_bus))
        rows = np.arange(self.n_lines)
        E[rows, self.lines[:, 0]] = 1.0
        E[rows, self.lines[:, 1]] = -1.0
        return E


@dataclass(frozen=True)
class HeatNetwork:
    """Typed heating edges between heat nodes.

    ``edges[j] = (tail, head)`` follows the mass-flow direction.
    ``heat_load`` is indexed by edge and must vanish on non-load edges.
    """

    edges: np.ndarray
    edge_types: tuple[str, ...]
    edge_volume: np.ndarray
    node_volume: np.ndarray
    mass_flow: np.ndarray
    heat_load: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "edges", _frozen(self.edges, dtype=int, ndim=2))
        object.__setattr__(self, "edge_types", tuple(self.edge_types))
        object.__setattr__(self, "edge_volume", _frozen(self.edge_volume))
        object.__setattr__(self, "node_volume", _frozen(self.node_volume))
        object.__setattr__(self, "mass_flow", _frozen(self.mass_flow))
        load = np.zeros(len(self.edges)) if self.heat_load is None else self.heat_load
        object.__setattr__(self, "heat_load", _frozen(load))
        self._validate()

    def _validate(self):
        n_e, n_n = self.n_edges, self.n_nodes
        if n_e and self.edges.shape[1] != 2:
            raise ValidationError("heat edges must be (tail, head) pairs")
        for name, arr in (
            ("edge_types", self.edge_types),
            ("edge_volume", self.edge_volume),
            ("mass_flow", self.mass_flow),
            ("heat_load", self.heat_load),
        ):
            if len(arr) != n_e:
                raise ValidationError(f"{name} has {len(arr)} entries for {n_e} edges")
        bad = [t for t in self.edge_types if t not in EDGE_TYPES]
        if bad:
            raise ValidationError(f"unknown heat edge type(s) {bad}; expected one of {EDGE_TYPES}")
        if n_e and (self.edges.min() < 0 or self.edges.max() >= n_n):
            raise ValidationError("heat edge references a node that does not exist")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValidationError("heat edge tail and head must differ")
        if np.any(self.edge_volume <= 0) or np.any(self.node_volume <= 0):
            raise ValidationError("heat volumes must be positive")
        if np.any(self.mass_flow <= 0):
            raise ValidationError("mass flows must be positive")
        not_load = np.array([t != LOAD for t in self.edge_types], dtype=bool)
        if n_e and np.any(self.heat_load[not_load] != 0):
            raise ValidationError("heat_load is only allowed on load edges")
        imbalance = self.incidence.T @ self.mass_flow
        if n_e and np.max(np.abs(imbalance)) > FLOW_BALANCE_TOL:
            k = int(np.argmax(np.abs(imbalance)))
            raise ValidationError(
                f"mass flow not conserved at node {k}: inflow - outflow = {imbalance[k]:.3g}"
            )

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_nodes(self) -> int:
        return len(self.node_volume)

    @property
    def incidence(self) -> np.ndarray:
        B = np.zeros((self.n_edges, self.n_nodes))
        rows = np.arange(self.n_edges)
        B[rows, self.edges[:, 1]] = 1.0
        B[rows, self.edges[:, 0]] = -1.0
        return B

    @property
    def volumes(self) -> np.ndarray:
        """Diagonal of the volume matrix, edges first then nodes."""
        return np.concatenate([self.edge_volume, self.node_volume])

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())

    def edges_of_type(self, kind: str) -> np.ndarray:
        return np.array([j for j, t in enumerate(self.edge_types) if t == kind], dtype=int)

    @property
    def source_edges(self) -> np.ndarray:
        return self.edges_of_type(SOURCE)

    @property
    def pump_edges(self) -> np.ndarray:
        return self.edges_of_type(PUMP)

    @property
    def load_edges(self) -> np.ndarray:
        return self.edges_of_type(LOAD)


@dataclass(frozen=True)
class PumpCoupling:
    """Heat pumps linking electric buses to heating edges.

    Both the frequency-dependent-load gain and the converter coefficient are
    stored; the active mode decides which one is used.
    """

    buses: tuple[int, ...]
    edges: tuple[int, ...]
    cop: np.ndarray
    mode1_gain: np.ndarray
    mode2_coefficient: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "edges", tuple(int(e) for e in self.edges))
        for name in ("cop", "mode1_gain", "mode2_coefficient"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.buses)
        for name in ("edges", "cop", "mode1_gain", "mode2_coefficient"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"pump {name} has {len(getattr(self, name))} entries for {n} pumps")
        if len(set(self.buses)) != n or len(set(self.edges)) != n:
            raise ValidationError("duplicate pump assignment: each pump needs its own bus and edge")
        if np.any(self.cop <= 1):
            raise ValidationError("heat pump CoP must exceed 1")
        if np.any(self.mode1_gain <= 0) or np.any(self.mode2_coefficient <= 0):
            raise ValidationError("pump gains must be positive")

    @property
    def n_pumps(self) -> int:
        return len(self.buses)

    @property
    def common_cop(self) -> bool:
        return bool(np.all(self.cop == self.cop[0])) if self.n_pumps else True

    @property
    def common_m(self) -> bool:
        return bool(np.all(self.mode2_coefficient == self.mode2_coefficient[0])) if self.n_pumps else True


def validate_networks(electric_spec: dict, heat_spec: dict, coupling_spec: dict | None = None):
    """Build and cross-check the three network objects from plain mappings.

    The mappings use the dataclass field names and zero-based indices.
    Returns ``(ElectricNetwork, HeatNetwork, PumpCoupling)``.
    """
    coupling_spec = dict(coupling_spec or {})
    buses = tuple(coupling_spec.get("buses", ()))
    electric = ElectricNetwork(
        inertia=electric_spec["inertia"],
        damping=electric_spec["damping"],
        lines=electric_spec.get("lines", np.zeros((0, 2), dtype=int)),
        susceptance=electric_spec.get("susceptance", ()),
        nominal_flow=electric_spec.get(
            "nominal_flow", np.zeros(len(electric_spec.get("lines", ())))
        ),
        generators=electric_spec.get("generators", ()),
        pump_buses=buses,
    )
    heat = HeatNetwork(**heat_spec)
    coupling = PumpCoupling(
        buses=buses,
        edges=coupling_spec.get("edges", ()),
        cop=coupling_spec.get("cop", ()),
        mode1_gain=coupling_spec.get("mode1_gain", ()),
        mode2_coefficient=coupling_spec.get("mode2_coefficient", ()),
    )
    pump_edges = set(heat.pump_edges.tolist())
    for b in coupling.buses:
        if not 0 <= b < electric.n_bus:
            raise ValidationError(f"pump bus {b} does not exist")
    for e in coupling.edges:
        if e not in pump_edges:
            raise ValidationError(f"pump edge {e} is not a pump-type heat edge")
    if pump_edges != set(coupling.edges):
        raise ValidationError("every pump-type heat edge needs exactly one pump in the coupling")
    return electric, heat, coupling


def split_incidence(B_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a heating incidence matrix into head and tail selectors.

    Returns ``(B_th, B_sh)`` with ``B_th = (|B_h| + B_h)/2`` marking head
    nodes and ``B_sh = (|B_h| - B_h)/2`` marking tail nodes.
    """
    B_h = np.asarray(B_h, dtype=float)
    if B_h.ndim != 2:
        raise ValidationError("incidence matrix must be two-dimensional")
    if not np.all(np.isin(B_h, (-1.0, 0.0, 1.0))):
        raise ValidationError("incidence entries must be -1, 0 or +1")
    heads = (B_h == 1).sum(axis=1)
    tails = (B_h == -1).sum(axis=1)
    nonzero = (heads + tails) > 0
    if np.any(heads[nonzero] != 1) or np.any(tails[nonzero] != 1):
        raise ValidationError("each incidence row needs exactly one +1 and one -1")
    absB = np.abs(B_h)
    return 0.5 * (absB + B_h), 0.5 * (absB - B_h)


def assemble_ah(heat: HeatNetwork) -> np.ndarray:
    """Thermal transport matrix ``A_h`` for the state ordering (edges, nodes).

    Edge rows: ``q_j (T_edge - T_tail)``; node rows: inflow-weighted mixing
    of the edges whose head is the node. The lower-right block uses the head
    selector, ``diag(B_th^T q)``, which is the total inflow of each node.
    """
    B_th, B_sh = split_incidence(heat.incidence)
    q = heat.mass_flow
    Dq = np.diag(q)
    return np.block([
        [Dq, -Dq @ B_sh],
        [-B_th.T @ Dq, np.diag(B_th.T @ q)],
    ])


def average_temperature(T, heat: HeatNetwork) -> float:
    """Volume-weighted mean of edge and node temperature deviations."""
    T = np.asarray(T, dtype=float)
    vol = heat.volumes
    if T.shape[-1] != vol.size:
        raise ValidationError(f"temperature vector has length {T.shape[-1]}, expected {vol.size}")
    return T @ vol / vol.sum()


def attach_converter_bus(
    electric: ElectricNetwork,
    coupling: PumpCoupling,
    link_susceptance: float,
    host_bus=None,
    mode: int = 2,
) -> ElectricNetwork:
    """Give every pump its own zero-inertia converter bus.

    Each converter bus ``n_bus + k`` is joined to its host by a single line
    ``(host, converter)`` of susceptance ``link_susceptance``. ``host_bus``
    defaults to the pump's own bus and may be an int (all pumps) or a
    per-pump sequence.
    """
    if mode != 2:
        raise ValidationError("converter buses only exist in mode 2")
    if electric.converters:
        raise ValidationError("network already has converter buses attached")
    if not link_susceptance > 0:
        raise ValidationError("link susceptance must be positive")
    n_p = coupling.n_pumps
    if n_p == 0:
        return electric
    if host_bus is None:
        hosts = list(coupling.buses)
    elif np.ndim(host_bus) == 0:
        hosts = [int(host_bus)] * n_p
    else:
        hosts = [int(h) for h in host_bus]
    if len(hosts) != n_p:
        raise ValidationError("need one host bus per pump")
    for h in hosts:
        if not 0 <= h < electric.n_bus:
            raise ValidationError(f"host bus {h} does not exist")
    n = electric.n_bus
    conv = tuple(range(n, n + n_p))
    new_lines = np.array([[h, c] for h, c in zip(hosts, conv)], dtype=int)
    return replace(
        electric,
        inertia=np.concatenate([electric.inertia, np.zeros(n_p)]),
        damping=np.concatenate([electric.damping, np.zeros(n_p)]),
        lines=np.vstack([electric.lines.reshape(-1, 2), new_lines]),
        susceptance=np.concatenate([electric.susceptance, np.full(n_p, float(link_susceptance))]),
        nominal_flow=np.concatenate([electric.nominal_flow, np.zeros(n_p)]),
        pump_buses=conv,
        converters=conv,
    )
