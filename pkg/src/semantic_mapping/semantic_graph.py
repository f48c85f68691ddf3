"""Superpoint graph with per-class node and edge confidences."""

from __future__ import annotations

from collections import defaultdict
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .core import BACKGROUND
from .label_tsdf_map import LabelTsdfMap, _pack, _unpack


class MissingVertexError(KeyError):
    pass


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _argmax_class(conf: dict) -> int:
    best, best_val = BACKGROUND, 0.0
    for c in sorted(conf):
        if conf[c] > best_val:
            best, best_val = c, conf[c]
    return best


class SpatialConfidence:
    """exp(-max(0, d - voxel_size) / sigma) on a coarse occupancy grid.

    d is the gap between the closest occupied coarse cells of two
    superpoints, zero when they share or touch a cell. Per-label cell sets
    are cached until `invalidate` is called.
    """

    def __init__(self, tsdf_map: LabelTsdfMap, sigma: float = 0.05, coarse: int = 4):
        self.map = tsdf_map
        self.sigma = sigma
        self.coarse = coarse
        self._cells: dict[int, np.ndarray] = {}
        self._trees: dict[int, cKDTree] = {}

    def invalidate(self, labels=None):
        """Drop cached cells of the given labels (all labels when None)."""
        if labels is None:
            self._cells.clear()
            self._trees.clear()
            return
        for label in labels:
            self._cells.pop(label, None)
            self._trees.pop(label, None)

    def cells(self, label: int) -> np.ndarray:
        cells = self._cells.get(label)
        if cells is None:
            g = self.map.flat_to_coords(self.map.superpoint_voxels(label))
            cells = _unpack(np.unique(_pack(np.floor_divide(g, self.coarse)))) if len(g) else np.zeros((0, 3), np.int64)
            self._cells[label] = cells
        return cells

    def distance(self, a: int, b: int) -> float:
        ca, cb = self.cells(a), self.cells(b)
        if len(ca) == 0 or len(cb) == 0:
            return float("inf")
        if len(ca) < len(cb):
            a, b, ca, cb = b, a, cb, ca
        tree = self._trees.get(a)
        if tree is None:
            tree = self._trees[a] = cKDTree(ca)
        # Chebyshev cell distance; touching cells are at distance 1
        dist, _ = tree.query(cb, k=1, p=np.inf)
        cell_gap = max(0.0, float(dist.min()) - 1.0)
        return cell_gap * self.coarse * self.map.voxel_size

    def __call__(self, a: int, b: int) -> float:
        return confidence_from_distance(self.distance(a, b), self.map.voxel_size, self.sigma)


def confidence_from_distance(d: float, voxel_size: float, sigma: float) -> float:
    if not np.isfinite(d):
        return 0.0
    return float(np.exp(-max(0.0, d - voxel_size) / sigma))


def spatial_confidence(a: int, b: int, tsdf_map: LabelTsdfMap, sigma: float = 0.05) -> float:
    return SpatialConfidence(tsdf_map, sigma)(a, b)


class SuperpointGraph:
    def __init__(self, max_pairs_per_instance: int = 8):
        self.node_conf: dict[int, dict[int, float]] = {}
        self.edge_conf: dict[tuple[int, int], dict[int, float]] = {}
        self.max_pairs_per_instance = max_pairs_per_instance
        # confidence mass of edges removed because both ends were merged
        self.folded_edge_mass = 0.0
        self._adj: dict[int, set] = defaultdict(set)

    @property
    def vertices(self) -> list[int]:
        return sorted(self.node_conf)

    def add_vertex(self, label: int):
        self.node_conf.setdefault(label, {})

    def has_vertex(self, label: int) -> bool:
        return label in self.node_conf

    def edge(self, a: int, b: int) -> dict[int, float]:
        return self.edge_conf.get(_edge(a, b), {})

    def neighbors(self, label: int) -> list[int]:
        return sorted(self._adj.get(label, ()))

    def add_edge_confidence(self, a: int, b: int, category: int, value: float):
        if a == b or value <= 0:
            return
        key = _edge(a, b)
        conf = self.edge_conf.setdefault(key, {})
        conf[category] = conf.get(category, 0.0) + value
        self._adj[a].add(b)
        self._adj[b].add(a)

    def accumulate_instance(self, confidence: float, category: int, hits: dict[int, int], spatial) -> None:
        """Fold one instance's ray hits into node and edge confidences.

        `spatial(a, b)` returns the spatial confidence of a superpoint pair.
        """
        for label in sorted(hits):
            self.add_vertex(label)
            node = self.node_conf[label]
            node[category] = node.get(category, 0.0) + confidence * hits[label]
        if len(hits) < 2:
            return
        top = sorted(hits, key=lambda l: (-hits[l], l))[: self.max_pairs_per_instance]
        for a, b in combinations(sorted(top), 2):
            value = confidence * spatial(a, b) * min(hits[a], hits[b])
            self.add_edge_confidence(a, b, category, value)

    def accumulate_frame(self, instance_hits: list[tuple[float, int, dict]], spatial) -> None:
        """instance_hits: (panoptic confidence, category, hits) per frame instance."""
        for confidence, category, hits in instance_hits:
            if hits:
                self.accumulate_instance(confidence, category, hits, spatial)

    def initial_semantic(self, label: int) -> int:
        return _argmax_class(self.node_conf.get(label, {}))

    def fold_vertices(self, survivor: int, absorbed: int) -> None:
        if survivor not in self.node_conf or absorbed not in self.node_conf:
            raise MissingVertexError(f"fold needs both vertices, got {survivor}, {absorbed}")
        if survivor == absorbed:
            return
        node = self.node_conf[survivor]
        for c, v in self.node_conf.pop(absorbed).items():
            node[c] = node.get(c, 0.0) + v
        for other in sorted(self._adj.pop(absorbed, set())):
            conf = self.edge_conf.pop(_edge(absorbed, other))
            self._adj[other].discard(absorbed)
            if other == survivor:
                self.folded_edge_mass += sum(conf.values())
                continue
            for c, v in conf.items():
                self.add_edge_confidence(survivor, other, c, v)
        if not self._adj.get(survivor):
            self._adj.pop(survivor, None)

    def remove_vertex(self, label: int) -> None:
        """Drop a vertex together with its incident edges."""
        if label not in self.node_conf:
            raise MissingVertexError(f"no vertex {label}")
        del self.node_conf[label]
        for other in self._adj.pop(label, set()):
            self.edge_conf.pop(_edge(label, other), None)
            self._adj[other].discard(label)
            if not self._adj[other]:
                del self._adj[other]

    def total_node_mass(self) -> float:
        return sum(sum(c.values()) for c in self.node_conf.values())

    def total_edge_mass(self) -> float:
        return sum(sum(c.values()) for c in self.edge_conf.values())

    def copy(self) -> "SuperpointGraph":
        g = SuperpointGraph(self.max_pairs_per_instance)
        g.node_conf = {k: dict(v) for k, v in self.node_conf.items()}
        g.edge_conf = {k: dict(v) for k, v in self.edge_conf.items()}
        g.folded_edge_mass = self.folded_edge_mass
        g._adj = defaultdict(set, {k: set(v) for k, v in self._adj.items()})
        return g

    def dump(self) -> str:
        """Line-oriented text: `v label c:conf ...` and `e a b c:conf ...`."""
        lines = []
        for label in self.vertices:
            items = " ".join(f"{c}:{v:.6f}" for c, v in sorted(self.node_conf[label].items()))
            lines.append(f"v {label} {items}".rstrip())
        for (a, b) in sorted(self.edge_conf):
            items = " ".join(f"{c}:{v:.6f}" for c, v in sorted(self.edge_conf[(a, b)].items()))
            lines.append(f"e {a} {b} {items}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> "SuperpointGraph":
        g = cls()
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue

            def confs(items):
                return {int(k): float(v) for k, v in (it.split(":") for it in items)}

            if parts[0] == "v":
                g.node_conf[int(parts[1])] = confs(parts[2:])
            elif parts[0] == "e":
                for c, v in confs(parts[3:]).items():
                    g.add_edge_confidence(int(parts[1]), int(parts[2]), c, v)
            else:
                raise ValueError(f"bad graph line: {line!r}")
        return g
