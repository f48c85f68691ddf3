"""Convex segmentation of depth images by region growing on the pixel grid.

Neighbouring pixels are joined when their depth step is small and the
surface between them is convex or only slightly concave. Pixels touching a
failing neighbour pair are boundary pixels and are left unassigned, so every
adjacent pair inside a segment passes the test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import CameraIntrinsics, backproject_image

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class SegmentationParams:
    max_concavity_deg: float = 10.0
    max_step_m: float = 0.05
    min_segment_px: int = 100
    normal_radius_px: int = 1


@dataclass(eq=False)
class GeometricSegment:
    segment_id: int
    rows: np.ndarray
    cols: np.ndarray
    mean_normal: np.ndarray

    @property
    def pixels(self) -> set[tuple[int, int]]:
        return set(zip(self.cols.tolist(), self.rows.tolist()))

    def __len__(self) -> int:
        return len(self.rows)


def estimate_normals(depth: np.ndarray, intrinsics: CameraIntrinsics, radius: int = 1) -> np.ndarray:
    """Camera-frame unit normals facing the camera; zero where undefined.

    Tangents are central differences of the backprojected points `radius`
    pixels away, so normals are undefined within `radius` of the border and
    wherever one of the four samples has no depth.
    """
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    normals = np.zeros((h, w, 3))
    r = int(radius)
    if h <= 2 * r or w <= 2 * r:
        return normals
    pts = backproject_image(depth, intrinsics)
    valid = depth > 0

    inner = (slice(r, h - r), slice(r, w - r))
    ok = (
        valid[inner]
        & valid[r : h - r, 2 * r :]
        & valid[r : h - r, : w - 2 * r]
        & valid[2 * r :, r : w - r]
        & valid[: h - 2 * r, r : w - r]
    )
    du = pts[r : h - r, 2 * r :] - pts[r : h - r, : w - 2 * r]
    dv = pts[2 * r :, r : w - r] - pts[: h - 2 * r, r : w - r]
    n = np.cross(dv, du)
    norm = np.linalg.norm(n, axis=-1)
    ok &= norm > 0
    n[~ok] = 0.0
    n[ok] /= norm[ok][:, None]
    # face the camera
    flip = np.einsum("ijk,ijk->ij", n, pts[inner]) > 0
    n[flip] *= -1.0
    normals[inner] = n
    return normals


def _pair_ok(p1, p2, n1, n2, d1, d2, params: SegmentationParams) -> np.ndarray:
    step_ok = np.abs(d1 - d2) <= params.max_step_m
    convex = np.einsum("...k,...k->...", n2 - n1, p2 - p1) >= 0.0
    cos_angle = np.clip(np.einsum("...k,...k->...", n1, n2), -1.0, 1.0)
    shallow = cos_angle >= np.cos(np.deg2rad(params.max_concavity_deg))
    return step_ok & (convex | shallow)


def boundary_mask(depth, normals, intrinsics, params: SegmentationParams) -> np.ndarray:
    """Pixels incident to at least one failing 4-neighbour pair."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = (depth > 0) & np.any(normals != 0, axis=-1)
    pts = backproject_image(depth, intrinsics)
    edge = np.zeros(depth.shape, dtype=bool)

    both = valid[:, :-1] & valid[:, 1:]
    ok = _pair_ok(pts[:, :-1], pts[:, 1:], normals[:, :-1], normals[:, 1:], depth[:, :-1], depth[:, 1:], params)
    bad = both & ~ok
    edge[:, :-1] |= bad
    edge[:, 1:] |= bad

    both = valid[:-1, :] & valid[1:, :]
    ok = _pair_ok(pts[:-1], pts[1:], normals[:-1], normals[1:], depth[:-1], depth[1:], params)
    bad = both & ~ok
    edge[:-1, :] |= bad
    edge[1:, :] |= bad
    return edge & valid


def segment_label_image(depth, normals, intrinsics, params: SegmentationParams = SegmentationParams()):
    """Label image (0 = unassigned) with segments numbered 1..K in raster order."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = (depth > 0) & np.any(normals != 0, axis=-1)
    interior = valid & ~boundary_mask(depth, normals, intrinsics, params)
    labels, n = ndimage.label(interior, structure=_FOUR_CONNECTED)
    if n == 0:
        return labels.astype(np.int32)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= params.min_segment_px
    keep[0] = False
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
    return remap[labels]


def segment_depth(depth, normals, intrinsics, params: SegmentationParams = SegmentationParams()) -> list[GeometricSegment]:
    labels = segment_label_image(depth, normals, intrinsics, params)
    return segments_from_labels(labels, normals)


def segments_from_labels(labels: np.ndarray, normals: np.ndarray) -> list[GeometricSegment]:
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat)
    starts = np.concatenate([[0], np.cumsum(counts)])
    w = labels.shape[1]
    nflat = normals.reshape(-1, 3)
    segments = []
    for seg_id in range(1, len(counts)):
        idx = order[starts[seg_id] : starts[seg_id + 1]]
        if len(idx) == 0:
            continue
        mean = nflat[idx].sum(axis=0)
        mean /= np.linalg.norm(mean)
        segments.append(GeometricSegment(seg_id, idx // w, idx % w, mean))
    return segments
