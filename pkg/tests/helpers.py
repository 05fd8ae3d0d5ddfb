"""Shared builders for the test-suite."""

from __future__ import annotations

import copy
import sys
from importlib import resources

import numpy as np

from chpfreq.dispatch import DispatchProblem
from chpfreq.network import HeatNetwork
from chpfreq.scenario import scenario_from_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def random_heat_network(rng: np.random.Generator, max_edges: int = 30) -> HeatNetwork:
    """Strongly connected heating graph whose flows are a sum of cycle flows.

    A Hamiltonian cycle keeps every node reachable; extra random cycles add
    edges up to ``max_edges``. Any sum of positive cycle flows conserves mass.
    """
    n_nodes = int(rng.integers(2, min(15, max_edges) + 1))
    target = int(rng.integers(n_nodes, max_edges + 1))
    edges, flows = [], []

    def add_cycle(nodes, q):
        for a, b in zip(nodes, np.roll(nodes, -1)):
            edges.append((int(a), int(b)))
            flows.append(q)

    add_cycle(rng.permutation(n_nodes), rng.uniform(0.1, 3.0))
    left = target - n_nodes
    while left >= 2:
        k = int(rng.integers(2, min(left, n_nodes) + 1))
        add_cycle(rng.choice(n_nodes, size=k, replace=False), rng.uniform(0.1, 3.0))
        left -= k
    # several cycles may share an edge; merge them so flows add up
    merged: dict = {}
    for e, q in zip(edges, flows):
        merged[e] = merged.get(e, 0.0) + q
    edges, flows = list(merged), list(merged.values())
    n_e = len(edges)
    types = ["source"] + ["load"] * (n_e - 1)
    return HeatNetwork(
        edges=np.array(edges),
        edge_types=types,
        edge_volume=rng.uniform(0.2, 3.0, n_e),
        node_volume=rng.uniform(0.2, 3.0, n_nodes),
        mass_flow=np.array(flows),
    )


def fixture_dict(name: str = "paper_mode1") -> dict:
    with resources.files("chpfreq.data").joinpath(f"{name}.toml").open("rb") as fh:
        return tomllib.load(fh)


def make_scenario(name: str = "paper_mode1", **sections):
    """Shipped fixture with selected sections patched.

    ``sections`` maps a section name to a dict of replacement fields; a value
    of ``None`` deletes the section.
    """
    data = copy.deepcopy(fixture_dict(name))
    for sec, patch in sections.items():
        if patch is None:
            data.pop(sec, None)
        elif isinstance(patch, dict):
            data.setdefault(sec, {}).update(patch)
        else:
            data[sec] = patch
    return scenario_from_dict(data, name=name)


def random_problem(rng, mode, n_pumps=None):
    ng, ns, nu = rng.integers(1, 5), rng.integers(1, 5), rng.integers(0, 4)
    n_p = int(rng.integers(0, 2)) if n_pumps is None else n_pumps
    cop = np.full(n_p, rng.uniform(1.5, 5.0))
    m = np.full(n_p, rng.uniform(0.1, 2.0))
    return DispatchProblem(
        mode, rng.uniform(0.1, 5.0, ng), rng.uniform(0.1, 5.0, ns), rng.uniform(0.1, 2.0, nu),
        rng.uniform(0.1, 3.0, n_p), cop, m, float(rng.uniform(-0.5, 0.5)), float(rng.uniform(-0.5, 0.5)),
    )
