"""Frames, poses, intrinsics and the pinhole camera model."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class InvalidDepthError(ValueError):
    pass


class Kind(str, Enum):
    THING = "thing"
    STUFF = "stuff"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point outside the image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def pixel_rays(self) -> np.ndarray:
        """Camera-frame ray directions with unit z for every pixel, shape (H, W, 3)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width].astype(np.float64)
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = (u - self.cx) / self.fx
        rays[..., 1] = (v - self.cy) / self.fy
        rays[..., 2] = 1.0
        return rays


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, translation, quat_xyzw) -> "Pose":
        x, y, z, w = (float(q) for q in quat_xyzw)
        n = np.sqrt(x * x + y * y + z * z + w * w)
        if n == 0:
            raise ValueError("zero quaternion")
        x, y, z, w = x / n, y / n, z / n, w / n
        r = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )
        return cls(r, translation)

    def quaternion(self) -> np.ndarray:
        """Rotation as (qx, qy, qz, qw) with qw >= 0."""
        r = self.rotation
        tr = np.trace(r)
        if tr > 0:
            s = np.sqrt(tr + 1.0) * 2
            q = [(r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s, 0.25 * s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2
            q = [0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s, (r[2, 1] - r[1, 2]) / s]
        elif r[1, 1] > r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2
            q = [(r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s, (r[0, 2] - r[2, 0]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2
            q = [(r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s, (r[1, 0] - r[0, 1]) / s]
        q = np.array(q)
        q /= np.linalg.norm(q)
        return -q if q[3] < 0 else q

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other: apply `other` first, then `self`."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def is_valid(self, tol: float = 1e-6) -> bool:
        r = self.rotation
        return bool(
            np.allclose(r.T @ r, np.eye(3), atol=tol)
            and abs(np.linalg.det(r) - 1.0) <= tol
            and np.all(np.isfinite(self.translation))
        )


@dataclass(frozen=True)
class PanopticInstance:
    instance_id: int
    category: int
    kind: Kind
    score: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))


@dataclass(eq=False)
class Frame:
    depth: np.ndarray
    panoptic_mask: np.ndarray
    instances: list[PanopticInstance]
    pose: Pose
    intrinsics: CameraIntrinsics
    frame_index: int = 0
    color: Optional[np.ndarray] = None
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def instance(self, instance_id: int) -> PanopticInstance:
        if self._by_id is None:
            self._by_id = {inst.instance_id: inst for inst in self.instances}
        return self._by_id[instance_id]

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape


# Violation records returned by validate_frame.


@dataclass(frozen=True)
class UnknownInstanceId:
    instance_id: int


@dataclass(frozen=True)
class NonFiniteDepth:
    pixel: tuple[int, int]


@dataclass(frozen=True)
class NegativeDepth:
    pixel: tuple[int, int]


@dataclass(frozen=True)
class ShapeMismatch:
    what: str
    shape: tuple
    expected: tuple


@dataclass(frozen=True)
class InvalidPose:
    reason: str


@dataclass(frozen=True)
class InvalidScore:
    instance_id: int
    score: float


@dataclass(frozen=True)
class UnknownCategory:
    instance_id: int
    category: int


def backproject(pixel, depth_m: float, intrinsics: CameraIntrinsics, pose: Pose) -> np.ndarray:
    depth_m = float(depth_m)
    if not np.isfinite(depth_m) or depth_m <= 0:
        raise InvalidDepthError(f"depth must be positive and finite, got {depth_m}")
    u, v = pixel
    p = np.array(
        [(u - intrinsics.cx) * depth_m / intrinsics.fx, (v - intrinsics.cy) * depth_m / intrinsics.fy, depth_m]
    )
    return pose.apply(p)


def project(world_point, intrinsics: CameraIntrinsics, pose: Pose) -> tuple[float, float, float]:
    """Inverse of backproject: world point -> (u, v, depth)."""
    p = pose.inverse().apply(np.asarray(world_point, dtype=np.float64))
    z = p[2]
    return (p[0] * intrinsics.fx / z + intrinsics.cx, p[1] * intrinsics.fy / z + intrinsics.cy, z)


def backproject_image(depth: np.ndarray, intrinsics: CameraIntrinsics, pose: Pose | None = None) -> np.ndarray:
    """Vectorised backprojection of a whole depth image, shape (H, W, 3).

    Invalid pixels (depth 0) map to the camera origin; callers mask them out.
    """
    pts = intrinsics.pixel_rays() * depth[..., None]
    if pose is not None:
        pts = pose.apply(pts.reshape(-1, 3)).reshape(pts.shape)
    return pts


def validate_frame(frame: Frame, class_kinds: dict[int, Kind] | None = None) -> list:
    out = []
    h, w = frame.depth.shape[:2]
    expected = (frame.intrinsics.height, frame.intrinsics.width)
    if (h, w) != expected:
        out.append(ShapeMismatch("depth", (h, w), expected))
    if frame.panoptic_mask.shape[:2] != frame.depth.shape[:2]:
        out.append(ShapeMismatch("panoptic_mask", frame.panoptic_mask.shape, frame.depth.shape))
    if frame.color is not None and frame.color.shape[:2] != frame.depth.shape[:2]:
        out.append(ShapeMismatch("color", frame.color.shape, frame.depth.shape))

    depth = np.asarray(frame.depth, dtype=np.float64)
    bad = ~np.isfinite(depth)
    if bad.any():
        v, u = np.argwhere(bad)[0]
        out.append(NonFiniteDepth((int(u), int(v))))
    neg = np.isfinite(depth) & (depth < 0)
    if neg.any():
        v, u = np.argwhere(neg)[0]
        out.append(NegativeDepth((int(u), int(v))))

    known = {inst.instance_id for inst in frame.instances}
    for iid in np.unique(frame.panoptic_mask):
        if iid != 0 and int(iid) not in known:
            out.append(UnknownInstanceId(int(iid)))
    for inst in frame.instances:
        if inst.kind is Kind.THING and not (0.0 < inst.score < 1.0):
            out.append(InvalidScore(inst.instance_id, inst.score))
        if class_kinds is not None and class_kinds.get(inst.category) is not inst.kind:
            out.append(UnknownCategory(inst.instance_id, inst.category))

    if not frame.pose.is_valid():
        out.append(InvalidPose("rotation is not orthonormal or translation not finite"))
    return out


BACKGROUND = 0


@dataclass(frozen=True)
class ClassSet:
    """Semantic categories split into things and stuff; id 0 is the background class."""

    names: dict
    kinds: dict

    def __post_init__(self):
        if BACKGROUND in self.kinds:
            raise ValueError("category 0 is reserved for the background class")

    @property
    def things(self) -> frozenset:
        return frozenset(c for c, k in self.kinds.items() if k is Kind.THING)

    @property
    def stuff(self) -> frozenset:
        return frozenset(c for c, k in self.kinds.items() if k is Kind.STUFF)

    def kind(self, category: int) -> Kind:
        return self.kinds[category]
