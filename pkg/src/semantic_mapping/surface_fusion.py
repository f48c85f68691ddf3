"""Per-frame surfaces: panoptic instance masks intersected with convex segments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassSet, Frame, Kind, PanopticInstance, backproject_image
from .geometric_segmentation import GeometricSegment

STUFF_CONFIDENCE = 0.5


class UnknownCategoryError(KeyError):
    pass


@dataclass(eq=False)
class Surface:
    surface_id: int
    segment_id: int
    instance_id: int
    category: int
    kind: Kind
    confidence: float
    rows: np.ndarray
    cols: np.ndarray
    point_cloud: np.ndarray

    @property
    def pixels(self) -> set[tuple[int, int]]:
        return set(zip(self.cols.tolist(), self.rows.tolist()))

    def __len__(self) -> int:
        return len(self.rows)


def panoptic_confidence(instance: PanopticInstance, classes: ClassSet | None = None) -> float:
    """Detector score for things, a flat 0.5 for stuff."""
    if classes is not None:
        if instance.category not in classes.kinds:
            raise UnknownCategoryError(f"category {instance.category} is neither thing nor stuff")
        kind = classes.kind(instance.category)
    else:
        kind = instance.kind
    if kind is Kind.THING:
        return float(instance.score)
    return STUFF_CONFIDENCE


def fuse_masks(
    frame: Frame,
    segments: list[GeometricSegment],
    min_surface_px: int = 20,
    classes: ClassSet | None = None,
) -> list[Surface]:
    h, w = frame.depth.shape
    seg_labels = np.zeros(h * w, dtype=np.int64)
    for seg in segments:
        seg_labels[seg.rows * w + seg.cols] = seg.segment_id

    mask = np.asarray(frame.panoptic_mask, dtype=np.int64).ravel()
    depth = np.asarray(frame.depth, dtype=np.float64).ravel()
    sel = np.flatnonzero((seg_labels > 0) & (mask > 0) & (depth > 0))
    if len(sel) == 0:
        return []

    stride = int(mask.max()) + 1
    keys = seg_labels[sel] * stride + mask[sel]
    # group pixels by (instance, segment)
    order = np.lexsort((seg_labels[sel], mask[sel]))
    keys_sorted = keys[order]
    uniq, starts, counts = np.unique(keys_sorted, return_index=True, return_counts=True)
    # np.unique sorts by key (segment-major); reorder groups to instance-major
    group_order = np.lexsort((uniq // stride, uniq % stride))

    world = None
    surfaces = []
    for g in group_order:
        if counts[g] < min_surface_px:
            continue
        if world is None:
            world = backproject_image(frame.depth, frame.intrinsics, frame.pose).reshape(-1, 3)
        idx = np.sort(sel[order[starts[g] : starts[g] + counts[g]]])
        seg_id, inst_id = int(uniq[g] // stride), int(uniq[g] % stride)
        inst = frame.instance(inst_id)
        confidence = panoptic_confidence(inst, classes)
        surfaces.append(
            Surface(
                surface_id=len(surfaces) + 1,
                segment_id=seg_id,
                instance_id=inst_id,
                category=inst.category,
                kind=classes.kind(inst.category) if classes is not None else inst.kind,
                confidence=confidence,
                rows=idx // w,
                cols=idx % w,
                point_cloud=world[idx],
            )
        )
    return surfaces
