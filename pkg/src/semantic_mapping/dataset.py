"""On-disk RGB-D sequence layout: intrinsics, poses, 16-bit depth/panoptic PNGs and sidecars."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .core import CameraIntrinsics, ClassSet, Frame, Kind, PanopticInstance, Pose
from .evaluation import GroundTruth
from .ply import read_ply, write_ply

DEPTH_SCALE = 1000.0


class DatasetError(ValueError):
    pass


def _fail(path, msg):
    raise DatasetError(f"{path}: {msg}")


def _rows(path: Path) -> list[list[str]]:
    if not path.exists():
        _fail(path, "missing file")
    out = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


# ------------------------------------------------------------------------ read
def read_intrinsics(path) -> CameraIntrinsics:
    path = Path(path)
    rows = _rows(path)
    if len(rows) != 1 or len(rows[0]) != 6:
        _fail(path, "expected one line 'fx fy cx cy width height'")
    try:
        fx, fy, cx, cy = (float(v) for v in rows[0][:4])
        w, h = int(rows[0][4]), int(rows[0][5])
        return CameraIntrinsics(fx, fy, cx, cy, w, h)
    except ValueError as exc:
        _fail(path, exc)


def read_poses(path) -> dict[int, Pose]:
    path = Path(path)
    poses = {}
    for i, row in enumerate(_rows(path), 1):
        if len(row) != 8:
            _fail(path, f"line {i}: expected 'index tx ty tz qx qy qz qw'")
        try:
            idx = int(row[0])
            vals = [float(v) for v in row[1:]]
            poses[idx] = Pose.from_quaternion(vals[:3], vals[3:])
        except ValueError as exc:
            _fail(path, f"line {i}: {exc}")
    return poses


def read_classes(path) -> ClassSet:
    path = Path(path)
    names, kinds = {}, {}
    for i, row in enumerate(_rows(path), 1):
        if len(row) != 3:
            _fail(path, f"line {i}: expected 'category_id name kind'")
        try:
            cid = int(row[0])
            kinds[cid] = Kind(row[2])
        except ValueError as exc:
            _fail(path, f"line {i}: {exc}")
        if cid == 0:
            _fail(path, "category 0 is reserved for background")
        names[cid] = row[1]
    return ClassSet(names, kinds)


def read_sidecar(path) -> list[PanopticInstance]:
    path = Path(path)
    out = []
    for i, row in enumerate(_rows(path), 1):
        if len(row) != 4:
            _fail(path, f"line {i}: expected 'id category_id kind score'")
        try:
            out.append(PanopticInstance(int(row[0]), int(row[1]), Kind(row[2]), float(row[3])))
        except ValueError as exc:
            _fail(path, f"line {i}: {exc}")
    return out


def _read_png16(path: Path, shape) -> np.ndarray:
    if not path.exists():
        _fail(path, "missing file")
    img = np.asarray(Image.open(path))
    if img.shape != shape:
        _fail(path, f"image is {img.shape}, intrinsics say {shape}")
    return img


class Dataset:
    """Lazy reader of a sequence directory; frames are decoded on iteration."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            _fail(self.root, "not a directory")
        self.intrinsics = read_intrinsics(self.root / "intrinsics.txt")
        self.poses = read_poses(self.root / "poses.txt")
        self.classes = read_classes(self.root / "classes.txt")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def indices(self) -> list[int]:
        return sorted(self.poses)

    def frame(self, idx: int) -> Frame:
        shape = self.intrinsics.shape
        name = f"{idx:06d}"
        depth = _read_png16(self.root / "depth" / f"{name}.png", shape).astype(np.float64) / DEPTH_SCALE
        mask = _read_png16(self.root / "panoptic" / f"{name}.png", shape).astype(np.int64)
        instances = read_sidecar(self.root / "panoptic" / f"{name}.txt")
        color_path = self.root / "color" / f"{name}.png"
        color = np.asarray(Image.open(color_path)) if color_path.exists() else None
        return Frame(depth, mask, instances, self.poses[idx], self.intrinsics, idx, color)

    def __iter__(self) -> Iterator[Frame]:
        for idx in self.indices:
            yield self.frame(idx)

    def ground_truth(self) -> GroundTruth | None:
        path = self.root / "gt_points.ply"
        return read_ground_truth(path) if path.exists() else None


# ----------------------------------------------------------------------- write
def _fmt(v: float) -> str:
    return f"{v:.9g}"


def write_dataset(root, frames: list[Frame], classes: ClassSet, gt: GroundTruth | None = None) -> Path:
    root = Path(root)
    (root / "depth").mkdir(parents=True, exist_ok=True)
    (root / "panoptic").mkdir(exist_ok=True)
    if not frames:
        raise DatasetError("cannot write an empty sequence")
    k = frames[0].intrinsics
    (root / "intrinsics.txt").write_text(" ".join(_fmt(v) for v in (k.fx, k.fy, k.cx, k.cy))
                                         + f" {k.width} {k.height}\n")
    lines = []
    for f in frames:
        q = f.pose.quaternion()
        vals = list(f.pose.translation) + list(q)
        lines.append(f"{f.frame_index} " + " ".join(_fmt(v) for v in vals))
    (root / "poses.txt").write_text("\n".join(lines) + "\n")
    (root / "classes.txt").write_text(
        "".join(f"{c} {classes.names[c]} {classes.kinds[c].value}\n" for c in sorted(classes.kinds)))
    for f in frames:
        name = f"{f.frame_index:06d}"
        depth_mm = np.clip(np.rint(f.depth * DEPTH_SCALE), 0, 65535).astype(np.uint16)
        Image.fromarray(depth_mm).save(root / "depth" / f"{name}.png")
        Image.fromarray(np.asarray(f.panoptic_mask, dtype=np.uint16)).save(root / "panoptic" / f"{name}.png")
        (root / "panoptic" / f"{name}.txt").write_text(
            "".join(f"{o.instance_id} {o.category} {o.kind.value} {o.score:.6f}\n" for o in f.instances))
        if f.color is not None:
            (root / "color").mkdir(exist_ok=True)
            Image.fromarray(np.asarray(f.color, dtype=np.uint8)).save(root / "color" / f"{name}.png")
    if gt is not None:
        write_ground_truth(root / "gt_points.ply", gt)
    return root


def write_ground_truth(path, gt: GroundTruth) -> None:
    p = gt.points.astype(np.float32)
    write_ply(path, {"x": p[:, 0], "y": p[:, 1], "z": p[:, 2],
                     "semantic_id": gt.semantic.astype(np.uint16), "instance_id": gt.instance.astype(np.uint32)})


def read_ground_truth(path) -> GroundTruth:
    v, _ = read_ply(path)
    for key in ("x", "y", "z", "semantic_id", "instance_id"):
        if key not in v:
            _fail(path, f"missing vertex property {key}")
    pts = np.stack([v["x"], v["y"], v["z"]], axis=1).astype(np.float64)
    return GroundTruth(pts, v["semantic_id"].astype(np.int64), v["instance_id"].astype(np.int64))


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
