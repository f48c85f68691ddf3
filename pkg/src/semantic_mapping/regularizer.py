"""Semantic label regularisation on the superpoint graph with alpha-beta swap moves.

Energy: sum of per-node unaries -log p(class) plus, on every co-observed
edge, a contrast-sensitive Potts-like penalty that vanishes when both ends
agree and decays with cross-class evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

from .core import BACKGROUND
from .maxflow import FlowNetwork, max_flow_min_cut
from .semantic_graph import SuperpointGraph


class ZeroEvidenceError(ValueError):
    pass


class SemiMetricError(AssertionError):
    pass


@dataclass
class EnergyProblem:
    """Nodes with per-class confidences and edges with summed edge confidence.

    `candidates[n]` lists the classes node n may take. `pairwise`, when set,
    replaces the default potential as f(a, b, class_a, class_b).
    """

    confidences: dict[int, dict[int, float]]
    edge_sums: dict[tuple[int, int], float]
    candidates: dict[int, tuple[int, ...]]
    k_c: float = 15.0
    theta: float = 0.5
    eps_prob: float = 1e-6
    pairwise: Optional[Callable[[int, int, int, int], float]] = None
    _totals: dict = field(default_factory=dict, init=False, repr=False)
    _adj: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.k_c <= 0 or self.theta <= 0:
            raise ValueError("K_C and theta must be positive")
        self._totals = {n: sum(c.values()) for n, c in self.confidences.items()}
        self._adj = {n: [] for n in self.confidences}
        for (a, b) in sorted(self.edge_sums):
            self._adj[a].append(b)
            self._adj[b].append(a)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.confidences)

    @property
    def classes(self) -> list[int]:
        return sorted({c for cs in self.candidates.values() for c in cs})

    def neighbors(self, node: int) -> list[int]:
        return self._adj[node]

    def probability(self, node: int, c: int) -> float:
        total = self._totals[node]
        if total <= 0:
            raise ZeroEvidenceError(f"node {node} has no semantic evidence")
        return self.confidences[node].get(c, 0.0) / total

    def unary(self, node: int, c: int) -> float:
        p = self.probability(node, c)
        return -math.log(p) if p > 0 else -math.log(self.eps_prob)

    def binary(self, a: int, b: int, ca: int, cb: int) -> float:
        if self.pairwise is not None:
            return self.pairwise(a, b, ca, cb)
        if ca == cb:
            return 0.0
        key = (a, b) if a < b else (b, a)
        denom = self.edge_sums.get(key, 0.0)
        if denom <= 0:
            return 0.0
        k = self.confidences[a].get(ca, 0.0) * self.confidences[b].get(cb, 0.0) / denom
        return self.k_c * math.exp(-k / (2.0 * self.theta**2))

    def initial_labeling(self) -> dict[int, int]:
        """Per-node argmax of the confidences (ties to the smallest class)."""
        out = {}
        for n in self.nodes:
            conf = self.confidences[n]
            best, best_val = self.candidates[n][0], -1.0
            for c in sorted(self.candidates[n]):
                v = conf.get(c, 0.0)
                if v > best_val:
                    best, best_val = c, v
            out[n] = best
        return out


def unary_potential(problem: EnergyProblem, node: int, c: int) -> float:
    return problem.unary(node, c)


def binary_potential(problem: EnergyProblem, a: int, b: int, ca: int, cb: int) -> float:
    return problem.binary(a, b, ca, cb)


def total_energy(problem: EnergyProblem, labeling: dict[int, int]) -> float:
    e = sum(problem.unary(n, labeling[n]) for n in problem.nodes)
    for (a, b) in sorted(problem.edge_sums):
        e += problem.binary(a, b, labeling[a], labeling[b])
    return e


def check_semimetric(problem: EnergyProblem, tol: float = 1e-12) -> None:
    for (a, b) in sorted(problem.edge_sums):
        cls = sorted(set(problem.candidates[a]) | set(problem.candidates[b]))
        for ca in cls:
            if abs(problem.binary(a, b, ca, ca)) > tol:
                raise SemiMetricError(f"psi({ca},{ca}) != 0 on edge {(a, b)}")
            for cb in cls:
                v = problem.binary(a, b, ca, cb)
                if v < -tol:
                    raise SemiMetricError(f"negative pairwise term on edge {(a, b)}")
                if abs(v - problem.binary(b, a, cb, ca)) > tol * max(1.0, abs(v)):
                    raise SemiMetricError(f"pairwise term depends on edge orientation on {(a, b)}")


def problem_from_graph(graph: SuperpointGraph, k_c: float = 15.0, theta: float = 0.5,
                       eps_prob: float = 1e-6) -> tuple[EnergyProblem, list[int]]:
    """Energy problem over superpoints with evidence; the rest are returned as pinned."""
    conf, pinned = {}, []
    for label in graph.vertices:
        c = {k: v for k, v in graph.node_conf[label].items() if v > 0}
        if c:
            conf[label] = c
        else:
            pinned.append(label)
    candidates = {n: tuple(sorted(set(c) | {BACKGROUND})) for n, c in conf.items()}
    edges = {}
    for (a, b), ec in graph.edge_conf.items():
        s = sum(ec.values())
        if a in conf and b in conf and s > 0:
            edges[(a, b)] = s
    return EnergyProblem(conf, edges, candidates, k_c, theta, eps_prob), pinned


@dataclass
class SwapResult:
    labeling: dict[int, int]
    energy: float
    initial_energy: float
    history: list[float]
    sweep_energies: list[float]
    moves: int


def _swap_move(problem: EnergyProblem, labeling: dict[int, int], alpha: int, beta: int) -> dict[int, int] | None:
    var = [n for n in problem.nodes
           if labeling[n] in (alpha, beta) and alpha in problem.candidates[n] and beta in problem.candidates[n]]
    if not var:
        return None
    index = {n: i for i, n in enumerate(var)}
    cost0 = [problem.unary(n, alpha) for n in var]
    cost1 = [problem.unary(n, beta) for n in var]
    n_var = len(var)
    net = FlowNetwork(n_var + 2)
    src, snk = n_var, n_var + 1
    for i, p in enumerate(var):
        for q in problem.neighbors(p):
            if q in index:
                if p > q:
                    continue
                j = index[q]
                a_ = problem.binary(p, q, alpha, alpha)
                b_ = problem.binary(p, q, alpha, beta)
                c_ = problem.binary(p, q, beta, alpha)
                d_ = problem.binary(p, q, beta, beta)
                cost1[i] += c_ - a_
                cost1[j] += d_ - c_
                net.add_edge(i, j, max(0.0, b_ + c_ - a_ - d_))
            else:
                cost0[i] += problem.binary(p, q, alpha, labeling[q])
                cost1[i] += problem.binary(p, q, beta, labeling[q])
    for i in range(n_var):
        m = min(cost0[i], cost1[i])
        # x=1 (beta) when the node ends on the sink side
        net.add_edge(src, i, cost1[i] - m)
        net.add_edge(i, snk, cost0[i] - m)
    _, source_side = max_flow_min_cut(net, src, snk)
    new = dict(labeling)
    for i, p in enumerate(var):
        new[p] = alpha if i in source_side else beta
    return new


def alpha_beta_swap(problem: EnergyProblem, labeling: dict[int, int] | None = None,
                    max_sweeps: int = 100, tol: float = 1e-10) -> SwapResult:
    check_semimetric(problem)
    labeling = dict(problem.initial_labeling() if labeling is None else labeling)
    energy = total_energy(problem, labeling)
    initial = energy
    history = [energy]
    sweeps = []
    moves = 0
    classes = problem.classes
    for _ in range(max_sweeps):
        improved = False
        for alpha, beta in combinations(classes, 2):
            proposal = _swap_move(problem, labeling, alpha, beta)
            if proposal is None:
                continue
            e = total_energy(problem, proposal)
            if e < energy - tol:
                labeling, energy = proposal, e
                history.append(e)
                moves += 1
                improved = True
        sweeps.append(energy)
        if not improved:
            break
    return SwapResult(labeling, energy, initial, history, sweeps, moves)


def regularize(graph: SuperpointGraph, k_c: float = 15.0, theta: float = 0.5, eps_prob: float = 1e-6,
               enabled: bool = True) -> dict[int, int]:
    """Semantic class per superpoint; zero-evidence superpoints stay background."""
    problem, pinned = problem_from_graph(graph, k_c, theta, eps_prob)
    if enabled and problem.nodes:
        labels = alpha_beta_swap(problem).labeling
    else:
        labels = problem.initial_labeling()
    for p in pinned:
        labels[p] = BACKGROUND
    return labels
