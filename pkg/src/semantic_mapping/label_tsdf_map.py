"""Block-hashed TSDF volume whose voxels also carry superpoint vote histograms."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import Frame

NO_LABEL = -1
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)


class EmptyMapError(RuntimeError):
    pass


def voxel_label(votes: dict) -> int | None:
    """Superpoint with the most votes; ties go to the smallest label."""
    if not votes:
        return None
    best, best_count = None, -1
    for label, count in votes.items():
        if count > best_count or (count == best_count and label < best):
            best, best_count = label, count
    return best


def _pack(g: np.ndarray) -> np.ndarray:
    g = g.astype(np.int64) + _KEY_OFFSET
    return (g[:, 0] << (2 * _KEY_BITS)) | (g[:, 1] << _KEY_BITS) | g[:, 2]


def _unpack(keys: np.ndarray) -> np.ndarray:
    mask = (1 << _KEY_BITS) - 1
    out = np.stack([(keys >> (2 * _KEY_BITS)) & mask, (keys >> _KEY_BITS) & mask, keys & mask], axis=1)
    return out - _KEY_OFFSET


@dataclass
class LabeledMesh:
    vertices: np.ndarray
    faces: np.ndarray
    superpoint: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray


class LabelTsdfMap:
    def __init__(self, voxel_size: float = 0.01, truncation: float | None = None, block_size: int = 16,
                 observation_weight: float = 1.0):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        truncation = 4 * voxel_size if truncation is None else truncation
        if truncation < 2 * voxel_size:
            raise ValueError("truncation must be at least two voxels")
        self.voxel_size = float(voxel_size)
        self.truncation = float(truncation)
        self.block_size = int(block_size)
        self.observation_weight = float(observation_weight)
        self._bvox = self.block_size**3

        # packed block key -> block storage index, plus a lazily sorted copy for lookups
        self._block_index: dict[int, int] = {}
        self._sorted_keys: np.ndarray | None = None
        self._sorted_idx: np.ndarray | None = None
        self._block_coords = np.zeros((0, 3), dtype=np.int64)
        self.tsdf = np.zeros(0)
        self.weight = np.zeros(0)
        self.label = np.zeros(0, dtype=np.int64)
        self.votes: dict[int, dict[int, int]] = {}
        # voxels holding any vote for a label / voxels whose argmax is that label
        self._voted: dict[int, set] = {}
        self._members: dict[int, set] = {}
        # labels whose voxel membership changed since the last pop_dirty()
        self._dirty: set = set()

    # ------------------------------------------------------------------ storage
    @property
    def num_blocks(self) -> int:
        return len(self._block_index)

    def _grow(self, nblocks: int):
        need = nblocks * self._bvox
        if need <= len(self.tsdf):
            return
        cap = max(need, 2 * len(self.tsdf), 64 * self._bvox)
        for name, fill in (("tsdf", 0.0), ("weight", 0.0), ("label", NO_LABEL)):
            old = getattr(self, name)
            new = np.full(cap, fill, dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)
        coords = np.zeros((cap // self._bvox, 3), dtype=np.int64)
        coords[: len(self._block_coords)] = self._block_coords
        self._block_coords = coords

    def voxel_coords(self, points: np.ndarray) -> np.ndarray:
        return np.floor(np.asarray(points, dtype=np.float64) / self.voxel_size).astype(np.int64)

    def voxel_centers(self, flat: np.ndarray) -> np.ndarray:
        return (self.flat_to_coords(flat) + 0.5) * self.voxel_size

    def flat_to_coords(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        b = self.block_size
        block, local = np.divmod(flat, self._bvox)
        lx, rem = np.divmod(local, b * b)
        ly, lz = np.divmod(rem, b)
        return self._block_coords[block] * b + np.stack([lx, ly, lz], axis=-1)

    def coords_to_flat(self, g: np.ndarray, allocate: bool = False) -> np.ndarray:
        """Flat storage index per voxel coordinate; -1 where the block is missing."""
        g = np.asarray(g, dtype=np.int64).reshape(-1, 3)
        if len(g) == 0:
            return np.zeros(0, dtype=np.int64)
        b = self.block_size
        blocks, local = np.divmod(g, b)
        keys = _pack(blocks)
        bidx = self._lookup_blocks(keys)
        if allocate and (bidx < 0).any():
            missing = np.unique(keys[bidx < 0])
            start = len(self._block_index)
            self._grow(start + len(missing))
            self._block_coords[start:start + len(missing)] = _unpack(missing)
            for i, key in enumerate(missing.tolist()):
                self._block_index[key] = start + i
            self._sorted_keys = None
            bidx = self._lookup_blocks(keys)
        flat = bidx * self._bvox + (local[:, 0] * b + local[:, 1]) * b + local[:, 2]
        flat[bidx < 0] = -1
        return flat

    def _lookup_blocks(self, keys: np.ndarray) -> np.ndarray:
        """Block storage index per packed block key, -1 if unallocated."""
        if self._sorted_keys is None:
            ks = np.fromiter(self._block_index.keys(), dtype=np.int64, count=len(self._block_index))
            vs = np.fromiter(self._block_index.values(), dtype=np.int64, count=len(self._block_index))
            order = np.argsort(ks)
            self._sorted_keys, self._sorted_idx = ks[order], vs[order]
        if len(self._sorted_keys) == 0:
            return np.full(len(keys), -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self._sorted_keys, keys), len(self._sorted_keys) - 1)
        found = self._sorted_keys[pos] == keys
        return np.where(found, self._sorted_idx[pos], -1)

    def allocated_flat(self) -> np.ndarray:
        n = self.num_blocks * self._bvox
        return np.arange(n, dtype=np.int64)

    # -------------------------------------------------------------- integration
    def integrate_depth(self, frame: Frame) -> None:
        """Projective TSDF update of every voxel within the truncation band of an observed pixel."""
        depth = np.asarray(frame.depth, dtype=np.float64)
        valid = depth > 0
        if not valid.any():
            return
        intr = frame.intrinsics
        rays = intr.pixel_rays()[valid]
        d = depth[valid]
        step = self.voxel_size * 0.75
        offsets = np.arange(-self.truncation, self.truncation + 0.5 * step, step)
        z = d[:, None] + offsets[None, :]
        cam = rays[:, None, :] * z[..., None]
        cam = cam[z > 0]
        world = frame.pose.apply(cam)
        keys = np.unique(_pack(self.voxel_coords(world)))
        g = _unpack(keys)

        centers = (g + 0.5) * self.voxel_size
        local = frame.pose.inverse().apply(centers)
        zc = local[:, 2]
        in_front = zc > 1e-9
        u = np.full(len(zc), -1, dtype=np.int64)
        v = np.full(len(zc), -1, dtype=np.int64)
        u[in_front] = np.rint(local[in_front, 0] * intr.fx / zc[in_front] + intr.cx).astype(np.int64)
        v[in_front] = np.rint(local[in_front, 1] * intr.fy / zc[in_front] + intr.cy).astype(np.int64)
        inside = in_front & (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
        dm = np.zeros(len(zc))
        dm[inside] = depth[v[inside], u[inside]]
        sdf = dm - zc
        keep = inside & (dm > 0) & (sdf >= -self.truncation)
        if not keep.any():
            return
        flat = self.coords_to_flat(g[keep], allocate=True)
        obs = np.minimum(sdf[keep], self.truncation)
        w_old = self.weight[flat]
        w_new = w_old + self.observation_weight
        self.tsdf[flat] = (self.tsdf[flat] * w_old + obs * self.observation_weight) / w_new
        self.weight[flat] = w_new

    def query_tsdf(self, point) -> tuple[float, float] | None:
        """(tsdf, weight) of the voxel containing point, None if unallocated."""
        flat = self.coords_to_flat(self.voxel_coords(np.asarray(point).reshape(1, 3)))[0]
        if flat < 0:
            return None
        return float(self.tsdf[flat]), float(self.weight[flat])

    # -------------------------------------------------------------------- votes
    def _set_label(self, flat: int, new: int | None):
        old = int(self.label[flat])
        new = NO_LABEL if new is None else new
        if old == new:
            return
        self._dirty.add(old)
        self._dirty.add(new)
        if old != NO_LABEL:
            members = self._members[old]
            members.discard(flat)
            if not members:
                del self._members[old]
        if new != NO_LABEL:
            self._members.setdefault(new, set()).add(flat)
        self.label[flat] = new

    def cast_votes(self, points: np.ndarray, label: int) -> None:
        """One vote for `label` per point, in the voxel containing it."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            return
        flat = self.coords_to_flat(self.voxel_coords(points), allocate=True)
        uniq, counts = np.unique(flat, return_counts=True)
        voted = self._voted.setdefault(label, set())
        labels = self.label
        for f, c in zip(uniq.tolist(), counts.tolist()):
            hist = self.votes.get(f)
            if hist is None:
                hist = self.votes[f] = {}
            n = hist.get(label, 0) + c
            hist[label] = n
            voted.add(f)
            cur = int(labels[f])
            if cur == label:
                continue
            if cur == NO_LABEL:
                self._set_label(f, label)
                continue
            m = hist[cur]
            if n > m or (n == m and label < cur):
                self._set_label(f, label)

    def cast_vote(self, point, label: int) -> None:
        self.cast_votes(np.asarray(point, dtype=np.float64).reshape(1, 3), label)

    def votes_at(self, point) -> dict[int, int]:
        flat = self.coords_to_flat(self.voxel_coords(np.asarray(point).reshape(1, 3)))[0]
        if flat < 0:
            return {}
        return dict(self.votes.get(int(flat), {}))

    def labels_at(self, points: np.ndarray) -> np.ndarray:
        """Argmax superpoint label of the voxel containing each point, -1 if none."""
        flat = self.coords_to_flat(self.voxel_coords(points))
        out = np.full(len(flat), NO_LABEL, dtype=np.int64)
        ok = flat >= 0
        out[ok] = self.label[flat[ok]]
        return out

    def rename_votes(self, old: int, new: int) -> None:
        if old == new:
            raise ValueError("rename_votes needs two distinct labels")
        voxels = self._voted.pop(old, set())
        target = self._voted.setdefault(new, set())
        for f in sorted(voxels):
            hist = self.votes[f]
            hist[new] = hist.get(new, 0) + hist.pop(old)
            target.add(f)
            self._set_label(f, voxel_label(hist))
        if not target:
            del self._voted[new]

    def total_votes(self) -> int:
        return sum(sum(h.values()) for h in self.votes.values())

    def superpoint_labels(self) -> list[int]:
        return sorted(self._members)

    def superpoint_voxels(self, label: int) -> np.ndarray:
        return np.array(sorted(self._members.get(label, ())), dtype=np.int64)

    def pop_dirty(self) -> set:
        """Labels whose voxel set changed since the previous call."""
        dirty, self._dirty = self._dirty - {NO_LABEL}, set()
        return dirty

    def voxel_count(self, label: int) -> int:
        return len(self._members.get(label, ()))

    # ----------------------------------------------------------------- raycasts
    def raycast_pixels(self, frame: Frame, pixel_mask: np.ndarray | None = None, far: float = 0.0) -> np.ndarray:
        """First labelled voxel along each pixel ray around its observed depth.

        Marches in half-voxel steps from the start of the truncation band to
        `far` metres past the observed surface. Returns a label image (-1
        where nothing is hit).
        """
        depth = np.asarray(frame.depth, dtype=np.float64)
        sel = depth > 0
        if pixel_mask is not None:
            sel &= pixel_mask
        out = np.full(depth.shape, NO_LABEL, dtype=np.int64)
        if not sel.any() or self.num_blocks == 0:
            return out
        rays = frame.intrinsics.pixel_rays()[sel]
        d = depth[sel]
        step = self.voxel_size / 2
        offsets = np.arange(-self.truncation, far + 0.5 * step, step)
        offsets[-1] = far
        z = np.maximum(d[:, None] + offsets[None, :], 1e-6)
        world = frame.pose.apply((rays[:, None, :] * z[..., None]).reshape(-1, 3))
        labels = self.labels_at(world).reshape(len(d), len(offsets))
        hit = labels != NO_LABEL
        first = np.argmax(hit, axis=1)
        got = hit[np.arange(len(d)), first]
        res = np.full(len(d), NO_LABEL, dtype=np.int64)
        res[got] = labels[np.arange(len(d))[got], first[got]]
        out[sel] = res
        return out

    def raycast_instance(self, frame: Frame, instance_id: int, hit_image: np.ndarray | None = None) -> dict[int, int]:
        """Per-superpoint ray hit counts for one panoptic instance of the frame."""
        mask = np.asarray(frame.panoptic_mask) == instance_id
        if hit_image is None:
            hit_image = self.raycast_pixels(frame, mask)
        hits = hit_image[mask & (hit_image != NO_LABEL)]
        if len(hits) == 0:
            return {}
        labels, counts = np.unique(hits, return_counts=True)
        return {int(l): int(c) for l, c in zip(labels, counts)}

    # --------------------------------------------------------------------- mesh
    def extract_labeled_mesh(self, semantic: dict | None = None, instance: dict | None = None,
                             label_radius_voxels: float = 2.0) -> LabeledMesh:
        """Marching-cubes surface at the TSDF zero crossing with per-vertex labels.

        Each vertex takes the argmax superpoint of the nearest labelled voxel
        (within `label_radius_voxels`), mapped through the given
        superpoint->semantic and superpoint->instance assignments.
        """
        from skimage.measure import marching_cubes

        observed = np.flatnonzero(self.weight[: self.num_blocks * self._bvox] > 0)
        if len(observed) == 0:
            raise EmptyMapError("map has no observed voxels")
        semantic = semantic or {}
        instance = instance or {}

        g = self.flat_to_coords(observed)
        lo = g.min(axis=0) - 1
        hi = g.max(axis=0) + 2
        shape = tuple(int(s) for s in hi - lo)
        vol = np.full(shape, self.truncation, dtype=np.float32)
        seen = np.zeros(shape, dtype=bool)
        idx = tuple((g - lo).T)
        vol[idx] = self.tsdf[observed]
        seen[idx] = True

        if vol.min() > 0 or vol.max() < 0:
            verts = np.zeros((0, 3))
            faces = np.zeros((0, 3), dtype=np.int64)
        else:
            verts, faces, _, _ = marching_cubes(vol, level=0.0, allow_degenerate=False)
            verts = verts.astype(np.float64)
            faces = faces.astype(np.int64)
            # drop vertices interpolated towards unobserved voxels
            fl = np.floor(verts).astype(np.int64)
            cl = np.ceil(verts).astype(np.int64)
            cl = np.minimum(cl, np.array(shape) - 1)
            ok = seen[tuple(fl.T)] & seen[tuple(cl.T)]
            faces = faces[ok[faces].all(axis=1)]
            used = np.unique(faces)
            remap = np.full(len(verts), -1, dtype=np.int64)
            remap[used] = np.arange(len(used))
            verts = verts[used]
            faces = remap[faces]
        world = (verts + lo + 0.5) * self.voxel_size

        sp = np.full(len(world), NO_LABEL, dtype=np.int64)
        labelled = np.flatnonzero(self.label[: self.num_blocks * self._bvox] != NO_LABEL)
        if len(labelled) and len(world):
            tree = cKDTree(self.voxel_centers(labelled))
            dist, nn = tree.query(world, k=1, distance_upper_bound=label_radius_voxels * self.voxel_size)
            hit = np.isfinite(dist)
            sp[hit] = self.label[labelled[nn[hit]]]
        sem = np.array([semantic.get(int(s), 0) for s in sp], dtype=np.int64)
        ins = np.array([instance.get(int(s), 0) for s in sp], dtype=np.int64)
        return LabeledMesh(world, faces, sp, sem, ins)

    # -------------------------------------------------------------------- misc
    def memory_bytes(self) -> int:
        arrays = self.tsdf.nbytes + self.weight.nbytes + self.label.nbytes + self._block_coords.nbytes
        # rough per-entry overhead of the python vote dictionaries
        entries = sum(len(h) for h in self.votes.values())
        return int(arrays + 232 * len(self.votes) + 72 * entries)

    def copy(self) -> "LabelTsdfMap":
        return copy.deepcopy(self)
