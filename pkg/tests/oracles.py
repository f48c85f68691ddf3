"""Independent reference solvers and seeded random instances shared by the unit and acceptance tests."""

import itertools

import networkx as nx
import numpy as np

from semantic_mapping.maxflow import FlowNetwork
from semantic_mapping.regularizer import EnergyProblem


def random_problem(seed: int, max_nodes: int = 10, max_classes: int = 3) -> EnergyProblem:
    """Small energy problem whose nodes favour one class, with some competing evidence.

    Node count is capped so that an exhaustive search stays within 3**9 labelings.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, max_classes + 1))
    cap = max_nodes if k == 2 else min(max_nodes, 9)
    n = int(rng.integers(2, cap + 1))
    classes = tuple(range(1, k + 1))
    conf = {}
    for node in range(n):
        dominant = int(rng.integers(1, k + 1))
        c = {dominant: float(rng.uniform(1, 5))}
        for other in classes:
            if other != dominant and rng.random() < 0.5:
                c[other] = float(rng.uniform(0, 3))
        conf[node] = c
    edges = {}
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < 0.4:
            edges[(a, b)] = float(rng.uniform(0.5, 8))
    return EnergyProblem(conf, edges, {node: classes for node in conf})


def exhaustive_minimum(problem: EnergyProblem) -> tuple[float, int]:
    """Global minimum energy by enumerating every labeling; returns (energy, evaluations)."""
    nodes = problem.nodes
    cands = [problem.candidates[n] for n in nodes]
    grid = np.array(list(itertools.product(*[range(len(c)) for c in cands])), dtype=np.int64)
    energy = np.zeros(len(grid))
    for i, n in enumerate(nodes):
        table = np.array([problem.unary(n, c) for c in cands[i]])
        energy += table[grid[:, i]]
    pos = {n: i for i, n in enumerate(nodes)}
    for (a, b) in problem.edge_sums:
        ia, ib = pos[a], pos[b]
        table = np.array([[problem.binary(a, b, ca, cb) for cb in cands[ib]] for ca in cands[ia]])
        energy += table[grid[:, ia], grid[:, ib]]
    return float(energy.min()), len(grid)


def random_network(seed: int, max_nodes: int = 20):
    """Random directed network with integer capacities; returns (FlowNetwork, edge list, n)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_nodes + 1))
    density = rng.uniform(0.05, 0.6)
    edges = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < density:
                edges.append((u, v, int(rng.integers(0, 20))))
    net = FlowNetwork(n)
    for u, v, c in edges:
        net.add_edge(u, v, c)
    return net, edges, n


def reference_max_flow(edges, n: int, source: int, sink: int) -> int:
    """Max-flow value from the networkx shortest-augmenting-path solver."""
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    for u, v, c in edges:
        if g.has_edge(u, v):
            g[u][v]["capacity"] += c
        else:
            g.add_edge(u, v, capacity=c)
    from networkx.algorithms.flow import shortest_augmenting_path

    return nx.maximum_flow_value(g, source, sink, flow_func=shortest_augmenting_path)


def cut_capacity(edges, source_side: set) -> float:
    return sum(c for u, v, c in edges if u in source_side and v not in source_side)
