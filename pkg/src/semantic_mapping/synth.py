"""Primitive-based synthetic RGB-D scenes with exact ground truth, plus seeded sensor/pose noise."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from .core import BACKGROUND, CameraIntrinsics, ClassSet, Frame, Kind, PanopticInstance, Pose
from .evaluation import GroundTruth

SHAPES = ("box", "sphere", "cylinder")


@dataclass(frozen=True)
class Primitive:
    """A solid primitive. `size` is (dx, dy, dz) for a box, (r,) for a sphere and (r, h) for a
    z-aligned cylinder; `yaw_deg` rotates boxes and cylinders about the world z axis."""

    shape: str
    center: tuple
    size: tuple
    category: int
    instance_id: int
    yaw_deg: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown primitive shape {self.shape!r}")
        if any(s <= 0 for s in self.size):
            raise ValueError("primitive sizes must be positive")

    @property
    def rotation(self) -> np.ndarray:
        return Rotation.from_euler("z", self.yaw_deg, degrees=True).as_matrix()

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=np.float64)
        if self.shape == "sphere":
            r = self.size[0]
            return c - r, c + r
        if self.shape == "cylinder":
            r, h = self.size
            half = np.array([r, r, h / 2])
        else:
            half = np.abs(self.rotation) @ (np.asarray(self.size) / 2)
        return c - half, c + half


@dataclass(frozen=True)
class Room:
    """Axis-aligned box shell; the camera looks at it from the inside."""

    lo: tuple
    hi: tuple
    wall: int = 1
    floor: int = 2
    ceiling: int = 3


@dataclass
class SceneSpec:
    objects: list
    intrinsics: CameraIntrinsics
    trajectory: list = field(default_factory=list)
    room: Room | None = None
    classes: ClassSet | None = None

    def __post_init__(self):
        ids = [o.instance_id for o in self.objects]
        if len(set(ids)) != len(ids) or any(i <= 0 for i in ids):
            raise ValueError("object instance ids must be unique and positive")
        if self.room is not None:
            lo, hi = np.asarray(self.room.lo), np.asarray(self.room.hi)
            for o in self.objects:
                blo, bhi = o.bounds()
                if np.any(blo < lo - 1e-9) or np.any(bhi > hi + 1e-9):
                    raise ValueError(f"object {o.instance_id} leaves the room")
        for p in self.trajectory:
            if not p.is_valid():
                raise ValueError("invalid trajectory pose")


@dataclass(frozen=True)
class NoiseSpec:
    pose_rot_deg: float = 0.0
    pose_trans_m: float = 0.0
    depth_std: float = 0.0
    mask_px: int = 0
    misclass_rate: float = 0.0
    score_range: tuple | None = None

    def __post_init__(self):
        if min(self.pose_rot_deg, self.pose_trans_m, self.depth_std, self.mask_px) < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not 0 <= self.misclass_rate < 1:
            raise ValueError("misclass_rate must lie in [0, 1)")

    @property
    def is_zero(self) -> bool:
        return (self.pose_rot_deg == 0 and self.pose_trans_m == 0 and self.depth_std == 0 and self.mask_px == 0
                and self.misclass_rate == 0 and self.score_range is None)


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


# --------------------------------------------------------------------- geometry
def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose of a camera at `eye` looking at `target` (x right, y down, z forward)."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.stack([x, y, z], axis=1), eye)


def orbit(n_frames: int, radius: float, height: float, target=(0.0, 0.0, 0.0), sweep_deg: float = 360.0,
          start_deg: float = 0.0) -> list[Pose]:
    out = []
    for i in range(n_frames):
        a = math.radians(start_deg + sweep_deg * i / n_frames)
        eye = (target[0] + radius * math.cos(a), target[1] + radius * math.sin(a), height)
        out.append(look_at(eye, target))
    return out


def _intersect_box(o, d, half):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def _intersect_sphere(o, d, r):
    a = np.einsum("ij,ij->i", d, d)
    b = 2 * np.einsum("ij,ij->i", o, d)
    c = np.einsum("ij,ij->i", o, o) - r * r
    disc = b * b - 4 * a * c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t = (-b - sq) / (2 * a)
    return np.where(ok & (t > 0), t, np.inf)


def _intersect_cylinder(o, d, r, h):
    t = np.full(len(o), np.inf)
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2 * (o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1])
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - r * r
    disc = b * b - 4 * a * c
    ok = (disc >= 0) & (a > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = (-b - np.sqrt(np.where(ok, disc, 0.0))) / (2 * a)
    zs = o[:, 2] + ts * d[:, 2]
    side = ok & (ts > 0) & (np.abs(zs) <= h / 2)
    t[side] = ts[side]
    for zc in (-h / 2, h / 2):
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = (zc - o[:, 2]) / d[:, 2]
        x = o[:, 0] + tc * d[:, 0]
        y = o[:, 1] + tc * d[:, 1]
        cap = np.isfinite(tc) & (tc > 0) & (x * x + y * y <= r * r)
        t = np.where(cap & (tc < t), tc, t)
    return t


def intersect_primitive(prim: Primitive, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Ray parameter of the first hit per ray (inf on a miss)."""
    R = prim.rotation
    o = (origins - np.asarray(prim.center)) @ R
    d = dirs @ R
    if prim.shape == "box":
        return _intersect_box(o, d, np.asarray(prim.size, dtype=np.float64) / 2)
    if prim.shape == "sphere":
        return _intersect_sphere(o, d, prim.size[0])
    return _intersect_cylinder(o, d, *prim.size)


def intersect_room(room: Room, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exit distance through the room shell and the stuff class of the face hit."""
    lo, hi = np.asarray(room.lo, dtype=np.float64), np.asarray(room.hi, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tf = np.where(dirs > 0, (hi - origins) / dirs, np.where(dirs < 0, (lo - origins) / dirs, np.inf))
    axis = np.argmin(tf, axis=1)
    t = tf[np.arange(len(tf)), axis]
    cls = np.full(len(t), room.wall, dtype=np.int64)
    cls[(axis == 2) & (dirs[:, 2] < 0)] = room.floor
    cls[(axis == 2) & (dirs[:, 2] > 0)] = room.ceiling
    t = np.where(t > 0, t, np.inf)
    return t, cls


# -------------------------------------------------------------------- rendering
@dataclass
class RenderedView:
    depth: np.ndarray
    instance: np.ndarray
    category: np.ndarray


def render_view(scene: SceneSpec, pose: Pose) -> RenderedView:
    """Nearest-hit depth along the optical axis, scene instance id and class per pixel.

    Room faces get negative instance ids (-class) so that stuff pixels stay
    distinguishable from unlabelled ones.
    """
    intr = scene.intrinsics
    rays = intr.pixel_rays().reshape(-1, 3)
    dirs = rays @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)
    depth = np.full(len(dirs), np.inf)
    inst = np.zeros(len(dirs), dtype=np.int64)
    cat = np.zeros(len(dirs), dtype=np.int64)
    if scene.room is not None:
        t, cls = intersect_room(scene.room, origins, dirs)
        depth, inst, cat = t, -cls, cls
    for prim in scene.objects:
        t = intersect_primitive(prim, origins, dirs)
        near = t < depth
        depth = np.where(near, t, depth)
        inst[near] = prim.instance_id
        cat[near] = prim.category
    miss = ~np.isfinite(depth)
    depth[miss] = 0.0
    inst[miss] = 0
    cat[miss] = BACKGROUND
    shape = intr.shape
    return RenderedView(depth.reshape(shape), inst.reshape(shape), cat.reshape(shape))


def render_frame(scene: SceneSpec, pose: Pose, frame_index: int = 0, seed: int = 0,
                 score_range: tuple = (0.6, 0.95)) -> Frame:
    """Exact depth and panoptic frame. Frame-local ids: visible things by scene id, then stuff by class."""
    view = render_view(scene, pose)
    classes = scene.classes
    mask = np.zeros(view.depth.shape, dtype=np.int64)
    instances = []
    present = set(np.unique(view.instance).tolist()) - {0}
    things = sorted(i for i in present if i > 0)
    stuff = sorted(-i for i in present if i < 0)
    local = 1
    for sid in things:
        cat = next(o.category for o in scene.objects if o.instance_id == sid)
        kind = classes.kind(cat) if classes is not None else Kind.THING
        score = float(_rng(seed, frame_index, sid).uniform(*score_range)) if kind is Kind.THING else 1.0
        mask[view.instance == sid] = local
        instances.append(PanopticInstance(local, cat, kind, score))
        local += 1
    for cls in stuff:
        mask[view.instance == -cls] = local
        instances.append(PanopticInstance(local, cls, Kind.STUFF, 1.0))
        local += 1
    return Frame(view.depth, mask, instances, pose, scene.intrinsics, frame_index)


def render_sequence(scene: SceneSpec, seed: int = 0, score_range: tuple = (0.6, 0.95)) -> list[Frame]:
    return [render_frame(scene, p, i, seed, score_range) for i, p in enumerate(scene.trajectory)]


# ------------------------------------------------------------------------ noise
def _small_rotation(rotvec) -> np.ndarray:
    return Rotation.from_rotvec(rotvec).as_matrix()


def pose_walk(n_frames: int, noise: NoiseSpec, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cumulative (rotation vector, translation) drift per frame; each step is drawn from its own stream."""
    out = []
    rot = np.zeros(3)
    trans = np.zeros(3)
    for i in range(n_frames):
        rng = _rng(seed, 0, i)
        rot = rot + rng.normal(0.0, math.radians(noise.pose_rot_deg), 3)
        trans = trans + rng.normal(0.0, noise.pose_trans_m, 3)
        out.append((rot.copy(), trans.copy()))
    return out


def _perturb_mask(frame: Frame, noise: NoiseSpec, seed: int, classes: ClassSet | None):
    mask = np.array(frame.panoptic_mask, copy=True)
    instances = list(frame.instances)
    valid = frame.depth > 0
    if noise.mask_px > 0:
        rng = _rng(seed, 2, frame.frame_index)
        things = [o for o in instances if o.kind is Kind.THING]
        ops = rng.integers(0, 2, len(things))
        structure = ndimage.generate_binary_structure(2, 1)
        for o, op in zip(things, ops):
            region = frame.panoptic_mask == o.instance_id
            if op == 0:
                shrunk = ndimage.binary_erosion(region, structure, iterations=noise.mask_px)
                mask[region & ~shrunk & (mask == o.instance_id)] = 0
            else:
                grown = ndimage.binary_dilation(region, structure, iterations=noise.mask_px)
                mask[grown & ~region & valid] = o.instance_id
    if noise.misclass_rate > 0:
        rng = _rng(seed, 3, frame.frame_index)
        pool = sorted(classes.things) if classes is not None else sorted({o.category for o in instances})
        new = []
        for o in instances:
            flip = rng.random() < noise.misclass_rate
            others = [c for c in pool if c != o.category]
            if o.kind is Kind.THING and flip and others:
                o = replace(o, category=int(others[rng.integers(len(others))]))
            new.append(o)
        instances = new
    if noise.score_range is not None:
        rng = _rng(seed, 4, frame.frame_index)
        instances = [replace(o, score=float(rng.uniform(*noise.score_range))) if o.kind is Kind.THING else o
                     for o in instances]
    return mask, instances


def apply_noise(frames: list[Frame], noise: NoiseSpec, seed: int = 0, classes: ClassSet | None = None) -> list[Frame]:
    """Perturbed copy of a sequence. Pose, depth and mask channels draw from independent seeded streams."""
    if noise.is_zero:
        return list(frames)
    walk = pose_walk(max((f.frame_index for f in frames), default=-1) + 1, noise, seed)
    out = []
    for f in frames:
        pose = f.pose
        if noise.pose_rot_deg > 0 or noise.pose_trans_m > 0:
            rot, trans = walk[f.frame_index]
            pose = Pose(_small_rotation(rot) @ f.pose.rotation, f.pose.translation + trans)
        depth = f.depth
        if noise.depth_std > 0:
            rng = _rng(seed, 1, f.frame_index)
            jitter = rng.normal(0.0, noise.depth_std, f.depth.shape)
            depth = np.where(f.depth > 0, np.maximum(f.depth + jitter, 0.0), 0.0)
        mask, instances = f.panoptic_mask, f.instances
        if noise.mask_px > 0 or noise.misclass_rate > 0 or noise.score_range is not None:
            mask, instances = _perturb_mask(f, noise, seed, classes)
            present = set(np.unique(mask).tolist())
            instances = [o for o in instances if o.instance_id in present]
        out.append(Frame(depth, mask, instances, pose, f.intrinsics, f.frame_index, f.color))
    return out


# ------------------------------------------------------------------ ground truth
def _box_samples(prim: Primitive, res: float) -> np.ndarray:
    half = np.asarray(prim.size, dtype=np.float64) / 2
    pts = []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        nu = max(1, math.ceil(prim.size[u] / res))
        nv = max(1, math.ceil(prim.size[v] / res))
        gu = (np.arange(nu) + 0.5) / nu * prim.size[u] - half[u]
        gv = (np.arange(nv) + 0.5) / nv * prim.size[v] - half[v]
        U, V = np.meshgrid(gu, gv, indexing="ij")
        for sign in (-1, 1):
            p = np.zeros((U.size, 3))
            p[:, u] = U.ravel()
            p[:, v] = V.ravel()
            p[:, axis] = sign * half[axis]
            pts.append(p)
    return np.concatenate(pts)


def _sphere_samples(r: float, res: float) -> np.ndarray:
    n = max(1, int(round(4 * math.pi * r * r / (res * res))))
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = math.pi * (1 + 5**0.5) * i
    return r * np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)


def _disk_samples(r: float, res: float) -> np.ndarray:
    g = np.arange(-r + res / 2, r, res)
    X, Y = np.meshgrid(g, g, indexing="ij")
    keep = X**2 + Y**2 <= r * r
    return np.stack([X[keep], Y[keep]], axis=1)


def _cylinder_samples(r: float, h: float, res: float) -> np.ndarray:
    na = max(3, math.ceil(2 * math.pi * r / res))
    nz = max(1, math.ceil(h / res))
    a = (np.arange(na) + 0.5) / na * 2 * math.pi
    z = (np.arange(nz) + 0.5) / nz * h - h / 2
    A, Z = np.meshgrid(a, z, indexing="ij")
    side = np.stack([r * np.cos(A.ravel()), r * np.sin(A.ravel()), Z.ravel()], axis=1)
    disk = _disk_samples(r, res)
    caps = [np.column_stack([disk, np.full(len(disk), s * h / 2)]) for s in (-1, 1)]
    return np.concatenate([side] + caps)


def surface_samples(prim: Primitive, res: float) -> np.ndarray:
    if prim.shape == "box":
        local = _box_samples(prim, res)
    elif prim.shape == "sphere":
        local = _sphere_samples(prim.size[0], res)
    else:
        local = _cylinder_samples(*prim.size, res)
    return local @ prim.rotation.T + np.asarray(prim.center)


def visible_mask(points: np.ndarray, scene: SceneSpec, poses: list[Pose], tol: float = 0.01) -> np.ndarray:
    """Points seen (unoccluded, in frustum) from at least one of the poses."""
    seen = np.zeros(len(points), dtype=bool)
    intr = scene.intrinsics
    for pose in poses:
        view = render_view(scene, pose)
        pc = pose.inverse().apply(points)
        z = pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.round(intr.fx * pc[:, 0] / z + intr.cx).astype(np.int64)
            v = np.round(intr.fy * pc[:, 1] / z + intr.cy).astype(np.int64)
        ok = (z > 0) & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
        d = np.zeros(len(points))
        d[ok] = view.depth[v[ok], u[ok]]
        seen |= ok & (d > 0) & (np.abs(d - z) <= tol)
    return seen


def ground_truth_points(scene: SceneSpec, resolution: float = 0.01, poses: list[Pose] | None = None,
                        tol: float = 0.01) -> GroundTruth:
    """Uniform surface samples of every object with (semantic, instance) labels.

    With `poses`, samples never visible from them (hidden faces, contact
    areas) are dropped.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    pts, sem, ins = [np.zeros((0, 3))], [np.zeros(0, np.int64)], [np.zeros(0, np.int64)]
    for prim in scene.objects:
        p = surface_samples(prim, resolution)
        pts.append(p)
        sem.append(np.full(len(p), prim.category, np.int64))
        ins.append(np.full(len(p), prim.instance_id, np.int64))
    points, semantic, instance = np.concatenate(pts), np.concatenate(sem), np.concatenate(ins)
    if poses is not None and len(points):
        keep = visible_mask(points, scene, poses, tol)
        points, semantic, instance = points[keep], semantic[keep], instance[keep]
    return GroundTruth(points, semantic, instance)


# ---------------------------------------------------------------------- presets
def default_classes() -> ClassSet:
    names = {1: "wall", 2: "floor", 3: "ceiling", 4: "box", 5: "ball", 6: "can"}
    kinds = {1: Kind.STUFF, 2: Kind.STUFF, 3: Kind.STUFF, 4: Kind.THING, 5: Kind.THING, 6: Kind.THING}
    return ClassSet(names, kinds)


def default_intrinsics(width: int = 160, height: int = 120) -> CameraIntrinsics:
    f = 0.9 * width
    return CameraIntrinsics(f, f, (width - 1) / 2, (height - 1) / 2, width, height)


def three_object_scene(n_frames: int = 60, width: int = 160, height: int = 120) -> SceneSpec:
    objects = [
        Primitive("box", (-0.32, -0.05, 0.15), (0.3, 0.25, 0.3), 4, 1, yaw_deg=20),
        Primitive("sphere", (0.3, 0.12, 0.15), (0.15,), 5, 2),
        Primitive("cylinder", (0.02, -0.4, 0.18), (0.11, 0.36), 6, 3),
    ]
    room = Room((-1.6, -1.6, 0.0), (1.6, 1.6, 2.2))
    traj = orbit(n_frames, 1.15, 0.95, target=(0.0, -0.05, 0.15))
    return SceneSpec(objects, default_intrinsics(width, height), traj, room, default_classes())


def cluttered_scene(n_frames: int = 60, width: int = 160, height: int = 120) -> SceneSpec:
    objects = [
        Primitive("box", (-0.38, 0.02, 0.12), (0.24, 0.24, 0.24), 4, 1, yaw_deg=10),
        Primitive("box", (-0.1, 0.05, 0.1), (0.2, 0.2, 0.2), 4, 2, yaw_deg=-15),
        Primitive("sphere", (0.22, 0.2, 0.12), (0.12,), 5, 3),
        Primitive("sphere", (0.47, 0.08, 0.1), (0.1,), 5, 4),
        Primitive("cylinder", (0.05, -0.36, 0.16), (0.1, 0.32), 6, 5),
        Primitive("cylinder", (-0.28, -0.38, 0.13), (0.09, 0.26), 6, 6),
    ]
    room = Room((-1.6, -1.6, 0.0), (1.6, 1.6, 2.2))
    traj = orbit(n_frames, 1.1, 0.9, target=(0.0, -0.05, 0.12))
    return SceneSpec(objects, default_intrinsics(width, height), traj, room, default_classes())


PRESETS = {"three_objects": three_object_scene, "cluttered": cluttered_scene}


def noise_level(level: float) -> NoiseSpec:
    """Pose-drift noise emulating a SLAM trajectory; `level` scales all magnitudes (0 = clean)."""
    return NoiseSpec(pose_rot_deg=0.04 * level, pose_trans_m=0.0008 * level, depth_std=0.001 * level)
