"""Surface-to-superpoint assignment, the co-observation matrix and merging."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .core import BACKGROUND
from .label_tsdf_map import NO_LABEL, LabelTsdfMap
from .semantic_graph import SuperpointGraph
from .surface_fusion import Surface


class EmptySurfaceError(ValueError):
    pass


@dataclass
class Superpoint:
    label: int
    semantic_confidences: dict
    semantic_label: int
    instance: int | None
    voxel_count: int


@dataclass(frozen=True)
class MergeRecord:
    frame_index: int
    survivor: int
    absorbed: int
    survivor_class: int
    absorbed_class: int
    overlap: int


@dataclass
class OverlapMatrix:
    counts: dict = field(default_factory=dict)

    def add(self, a: int, b: int, n: int = 1):
        if a == b:
            return
        key = (a, b) if a < b else (b, a)
        self.counts[key] = self.counts.get(key, 0) + n

    def get(self, a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        return self.counts.get(key, 0)

    def fold(self, survivor: int, absorbed: int):
        for key in sorted(k for k in self.counts if absorbed in k):
            n = self.counts.pop(key)
            other = key[0] if key[1] == absorbed else key[1]
            if other != survivor:
                self.add(survivor, other, n)


def overlap_counts(surface: Surface, tsdf_map: LabelTsdfMap) -> dict[int, int]:
    """Points of the surface per superpoint label of the voxel they fall in."""
    labels = tsdf_map.labels_at(surface.point_cloud)
    labels = labels[labels != NO_LABEL]
    if len(labels) == 0:
        return {}
    uniq, counts = np.unique(labels, return_counts=True)
    return {int(l): int(c) for l, c in zip(uniq, counts)}


class SuperpointManager:
    def __init__(self, tsdf_map: LabelTsdfMap, graph: SuperpointGraph, min_overlap_ratio: float = 0.25,
                 min_overlap_voxels: int = 10, theta_merge: float = 3, semantic_consistency: bool = True):
        self.map = tsdf_map
        self.graph = graph
        self.min_overlap_ratio = min_overlap_ratio
        self.min_overlap_voxels = min_overlap_voxels
        self.theta_merge = theta_merge
        self.semantic_consistency = semantic_consistency
        self.overlap = OverlapMatrix()
        self.labels: set[int] = set()
        self.next_label = 1
        self.merge_log: list[MergeRecord] = []
        # data association: superpoint -> Counter(global instance -> observations)
        self.instance_counts: dict[int, Counter] = {}
        self.instance_category: dict[int, int] = {}
        self.next_instance = 1
        self.on_merge: list[Callable[[int, int], None]] = []
        self._alias: dict[int, int] = {}

    # -------------------------------------------------------------- assignment
    def threshold(self, n_points: int) -> float:
        return max(self.min_overlap_voxels, self.min_overlap_ratio * n_points)

    def new_label(self) -> int:
        label = self.next_label
        self.next_label += 1
        self.labels.add(label)
        self.graph.add_vertex(label)
        return label

    def assign_surface(self, surface: Surface) -> tuple[int, set[int]]:
        """Assign a surface to its best-overlapping superpoint (or a new one) and vote."""
        n = len(surface.point_cloud)
        if n == 0:
            raise EmptySurfaceError(f"surface {surface.surface_id} has no points")
        counts = overlap_counts(surface, self.map)
        thresh = self.threshold(n)
        significant = {l for l, c in counts.items() if c >= thresh}
        if significant:
            label = min(significant, key=lambda l: (-counts[l], l))
        else:
            label = self.new_label()
        self.map.cast_votes(surface.point_cloud, label)
        return label, significant

    def update_overlap_matrix(self, significant: set[int]) -> None:
        for a, b in combinations(sorted(significant), 2):
            self.overlap.add(a, b)

    # ------------------------------------------------------------------- merge
    def resolve(self, label: int) -> int:
        """Current label of a superpoint that may since have been merged away."""
        while label in self._alias:
            label = self._alias[label]
        return label

    def semantic_label(self, label: int) -> int:
        return self.graph.initial_semantic(label)

    def consistent(self, a: int, b: int) -> bool:
        if not self.semantic_consistency:
            return True
        ca, cb = self.semantic_label(a), self.semantic_label(b)
        return ca == cb or ca == BACKGROUND or cb == BACKGROUND

    def _candidates(self):
        return sorted(k for k, n in self.overlap.counts.items() if n > self.theta_merge)

    def merge_pass(self, frame_index: int = -1) -> list[MergeRecord]:
        """Merge spatially connected, semantically consistent pairs to a fixed point.

        Pairs are merged one at a time against current semantics, so a
        background superpoint can never bridge two different classes.
        """
        merged = []
        changed = True
        while changed:
            changed = False
            for a, b in self._candidates():
                if (a, b) not in self.overlap.counts or not self.consistent(a, b):
                    continue
                merged.append(self.merge(a, b, frame_index))
                changed = True
                break
        return merged

    def merge(self, a: int, b: int, frame_index: int = -1) -> MergeRecord:
        survivor, absorbed = min(a, b), max(a, b)
        record = MergeRecord(frame_index, survivor, absorbed, self.semantic_label(survivor),
                             self.semantic_label(absorbed), self.overlap.get(a, b))
        self.map.rename_votes(absorbed, survivor)
        self.graph.fold_vertices(survivor, absorbed)
        self.overlap.fold(survivor, absorbed)
        counts = self.instance_counts.pop(absorbed, None)
        if counts:
            self.instance_counts.setdefault(survivor, Counter()).update(counts)
        self.labels.discard(absorbed)
        self._alias[absorbed] = survivor
        for hook in self.on_merge:
            hook(survivor, absorbed)
        self.merge_log.append(record)
        return record

    # --------------------------------------------------------- data association
    def superpoint_instance(self, label: int) -> int | None:
        counts = self.instance_counts.get(label)
        if not counts:
            return None
        return min(counts, key=lambda g: (-counts[g], g))

    def associate_instances(self, surfaces: list[Surface], assigned: list[int],
                            ray_hits: dict[int, dict[int, int]] | None = None) -> dict[int, int]:
        """Map each 2D instance of a frame to a persistent instance id.

        Overlap between a 2D instance and a persistent instance counts the
        instance's surface points on superpoints currently owned by it, plus
        (optionally) its pixel ray hits on such superpoints. Matching is greedy
        one-to-one within the frame and restricted to the same category.
        Returns frame instance id -> persistent id.
        """
        overlap: dict[tuple[int, int], int] = Counter()
        category: dict[int, int] = {}
        for surf, label in zip(surfaces, assigned):
            category[surf.instance_id] = surf.category
            g = self.superpoint_instance(label)
            if g is not None and self.instance_category.get(g) == surf.category:
                overlap[(surf.instance_id, g)] += len(surf.point_cloud)
        for o, hits in sorted((ray_hits or {}).items()):
            if o not in category:
                continue
            for label, n in sorted(hits.items()):
                g = self.superpoint_instance(label)
                if g is not None and self.instance_category.get(g) == category[o]:
                    overlap[(o, g)] += n
        mapping: dict[int, int] = {}
        taken: set[int] = set()
        for (o, g), _ in sorted(overlap.items(), key=lambda kv: (-kv[1], kv[0])):
            if o in mapping or g in taken:
                continue
            mapping[o] = g
            taken.add(g)
        for o in sorted(category):
            if o not in mapping:
                mapping[o] = self.next_instance
                self.instance_category[self.next_instance] = category[o]
                self.next_instance += 1
        for surf, label in zip(surfaces, assigned):
            self.instance_counts.setdefault(label, Counter())[mapping[surf.instance_id]] += 1
        return mapping

    # ------------------------------------------------------------------- views
    def superpoints(self) -> dict[int, Superpoint]:
        out = {}
        for label in sorted(self.labels):
            out[label] = Superpoint(
                label=label,
                semantic_confidences=dict(self.graph.node_conf.get(label, {})),
                semantic_label=self.semantic_label(label),
                instance=self.superpoint_instance(label),
                voxel_count=self.map.voxel_count(label),
            )
        return out
