"""Shortest-augmenting-path (Edmonds-Karp) max-flow / min-cut."""

from __future__ import annotations

from collections import deque

EPS = 1e-12


class FlowNetwork:
    """Directed network on nodes 0..n-1 with residual adjacency maps."""

    def __init__(self, n: int):
        self.n = n
        self.cap: list[dict[int, float]] = [dict() for _ in range(n)]

    def add_edge(self, u: int, v: int, capacity: float) -> None:
        if capacity < 0:
            raise ValueError(f"negative capacity {capacity} on edge {u}->{v}")
        if u == v or capacity == 0:
            return
        self.cap[u][v] = self.cap[u].get(v, 0.0) + capacity
        self.cap[v].setdefault(u, 0.0)

    def edges(self):
        for u in range(self.n):
            for v, c in self.cap[u].items():
                if c > 0:
                    yield u, v, c


def max_flow_min_cut(net: FlowNetwork, source: int, sink: int) -> tuple[float, set[int]]:
    """Returns (max flow value, nodes on the source side of a minimum cut)."""
    if source == sink:
        raise ValueError("source and sink must differ")
    residual = [dict(adj) for adj in net.cap]
    flow = 0.0
    while True:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, c in residual[u].items():
                if c > EPS and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            break
        bottleneck = float("inf")
        v = sink
        while parent[v] is not None:
            u = parent[v]
            bottleneck = min(bottleneck, residual[u][v])
            v = u
        v = sink
        while parent[v] is not None:
            u = parent[v]
            residual[u][v] -= bottleneck
            residual[v][u] = residual[v].get(u, 0.0) + bottleneck
            v = u
        flow += bottleneck
    return flow, set(parent)
