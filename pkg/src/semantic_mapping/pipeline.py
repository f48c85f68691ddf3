"""Incremental mapping session: per-frame loop, query-time labelling, exports and benchmarks."""

from __future__ import annotations

import time
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import PipelineConfig
from .core import BACKGROUND, ClassSet, Frame, validate_frame
from .evaluation import GroundTruth, MetricsReport, Prediction, evaluate
from .geometric_segmentation import estimate_normals, segment_label_image, segments_from_labels
from .instance_refiner import InstanceLabel, refine_instances
from .label_tsdf_map import NO_LABEL, EmptyMapError, LabeledMesh, LabelTsdfMap
from .regularizer import regularize
from .semantic_graph import SpatialConfidence, SuperpointGraph
from .superpoint_manager import SuperpointManager
from .surface_fusion import Surface, fuse_masks, panoptic_confidence

FRAME_STAGES = ("segmentation", "fusion", "integration", "superpoint", "graph")


class FrameValidationError(ValueError):
    def __init__(self, frame_index: int, violations: list):
        super().__init__(f"frame {frame_index}: {violations}")
        self.frame_index = frame_index
        self.violations = violations


@dataclass
class Prepared:
    frame: Frame
    surfaces: list[Surface]
    timings: dict


def prepare_frame(frame: Frame, config: PipelineConfig, classes: ClassSet | None = None) -> Prepared:
    """Stage one: validation, geometric segmentation and mask fusion (no shared state)."""
    violations = validate_frame(frame, classes.kinds if classes is not None else None)
    if violations:
        raise FrameValidationError(frame.frame_index, violations)
    t0 = time.perf_counter()
    params = config.segmentation()
    normals = estimate_normals(frame.depth, frame.intrinsics, params.normal_radius_px)
    labels = segment_label_image(frame.depth, normals, frame.intrinsics, params)
    segments = segments_from_labels(labels, normals)
    t1 = time.perf_counter()
    surfaces = fuse_masks(frame, segments, config.min_surface_px, classes)
    t2 = time.perf_counter()
    return Prepared(frame, surfaces, {"segmentation": t1 - t0, "fusion": t2 - t1})


@dataclass
class QueryResult:
    semantic: dict[int, int]
    instance: dict[int, int]
    instances: list[InstanceLabel]
    confidence: dict[int, float]
    mesh: LabeledMesh
    timings: dict = field(default_factory=dict)


class MapSession:
    def __init__(self, config: PipelineConfig = PipelineConfig(), classes: ClassSet | None = None):
        self.config = config
        self.classes = classes
        self.map = LabelTsdfMap(config.voxel_size, config.truncation, config.block_size)
        self.graph = SuperpointGraph(config.max_pairs_per_instance)
        self.manager = SuperpointManager(self.map, self.graph, config.min_overlap_ratio, config.min_overlap_voxels,
                                         config.theta_merge, config.semantic_consistency)
        self.spatial = SpatialConfidence(self.map, config.sigma_spatial)
        self.frames_integrated = 0
        self.surfaces_processed = 0
        self.frames_without_surfaces = 0
        self.timings: list[dict] = []

    @property
    def merge_log(self):
        return self.manager.merge_log

    def integrate(self, prepared: Prepared) -> None:
        """Stage two: map and graph mutation for one frame, in frame order."""
        frame, surfaces = prepared.frame, prepared.surfaces
        timings = dict(prepared.timings)
        t0 = time.perf_counter()
        self.map.integrate_depth(frame)
        t1 = time.perf_counter()
        assigned = []
        for surf in surfaces:
            label, significant = self.manager.assign_surface(surf)
            self.manager.update_overlap_matrix(significant | {label})
            assigned.append(label)
        t2 = time.perf_counter()
        labelled = np.asarray(frame.panoptic_mask) > 0
        hit_image = self.map.raycast_pixels(frame, labelled, far=self.config.truncation / 2)
        hits = {inst.instance_id: self.map.raycast_instance(frame, inst.instance_id, hit_image)
                for inst in frame.instances}
        if surfaces:
            self.manager.associate_instances(surfaces, assigned, hits)
        t3 = time.perf_counter()
        self.manager.merge_pass(frame.frame_index)
        t4 = time.perf_counter()
        self.spatial.invalidate(self.map.pop_dirty())
        observations = []
        for inst in frame.instances:
            # merges may have renamed hit superpoints
            h = Counter()
            for label, n in hits[inst.instance_id].items():
                h[self.manager.resolve(label)] += n
            observations.append((panoptic_confidence(inst, self.classes), inst.category, dict(h)))
        self.graph.accumulate_frame(observations, self.spatial)
        t5 = time.perf_counter()
        timings.update(integration=t1 - t0, superpoint=(t2 - t1) + (t4 - t3), graph=(t3 - t2) + (t5 - t4))
        self.timings.append(timings)
        self.frames_integrated += 1
        self.surfaces_processed += len(surfaces)
        self.frames_without_surfaces += not surfaces

    # -------------------------------------------------------------------- query
    def _stuff_classes(self) -> frozenset:
        stuff = self.classes.stuff if self.classes is not None else frozenset()
        return stuff | {BACKGROUND}

    def query(self) -> QueryResult:
        """Regularise semantics and refine instances on a snapshot; mapping state is left untouched."""
        if self.frames_integrated == 0:
            raise EmptyMapError("query on an empty session")
        cfg = self.config
        graph = self.graph.copy()
        # superpoints whose voxels were all taken over by others no longer describe any region
        for label in graph.vertices:
            if self.map.voxel_count(label) == 0:
                graph.remove_vertex(label)
        t0 = time.perf_counter()
        semantic = regularize(graph, cfg.k_c, cfg.theta, cfg.eps_prob, enabled=cfg.regularize)
        t1 = time.perf_counter()
        association = {label: self.manager.superpoint_instance(label) for label in semantic}
        classes = sorted(set(semantic.values()))
        params = {c: cfg.refine_params(c) for c in classes}
        instances = refine_instances(semantic, association, graph, params, enabled=cfg.refine,
                                     skip_classes=self._stuff_classes())
        t2 = time.perf_counter()
        instance = {label: o.id for o in instances for label in o.members}
        confidence = {o.id: instance_score(o, graph) for o in instances}
        mesh = self.map.extract_labeled_mesh(semantic, instance)
        t3 = time.perf_counter()
        return QueryResult(semantic, instance, instances, confidence, mesh,
                           {"regularization": t1 - t0, "refinement": t2 - t1, "mesh": t3 - t2})

    def labelled_points(self, result: QueryResult) -> Prediction:
        """Centres of voted voxels with their superpoint, semantic and instance labels."""
        n = self.map.num_blocks * self.map._bvox
        flat = np.flatnonzero(self.map.label[:n] != NO_LABEL)
        sp = self.map.label[flat]
        sem = np.array([result.semantic.get(int(s), 0) for s in sp], dtype=np.int64)
        ins = np.array([result.instance.get(int(s), 0) for s in sp], dtype=np.int64)
        return Prediction(self.map.voxel_centers(flat), sem, ins, dict(result.confidence), sp)

    def evaluate(self, gt: GroundTruth, result: QueryResult | None = None) -> MetricsReport:
        result = self.query() if result is None else result
        things = self.classes.things if self.classes is not None else None
        return evaluate(self.labelled_points(result), gt, things, self.config.eval_radius,
                        self.config.eval_min_region)


def instance_score(inst: InstanceLabel, graph: SuperpointGraph) -> float:
    """Share of the members' node confidence that supports the instance class."""
    support = total = 0.0
    for label in inst.members:
        conf = graph.node_conf.get(label, {})
        support += conf.get(inst.category, 0.0)
        total += sum(conf.values())
    return support / total if total > 0 else 0.0


def _prepared_stream(frames: Iterable[Frame], config: PipelineConfig, classes):
    """Stage-one results in frame order, with at most `queue_capacity` frames in flight."""
    if config.workers <= 1:
        for f in frames:
            yield prepare_frame(f, config, classes)
        return
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        pending: deque = deque()
        for f in frames:
            if len(pending) >= config.queue_capacity:
                yield pending.popleft().result()
            pending.append(pool.submit(prepare_frame, f, config, classes))
        while pending:
            yield pending.popleft().result()


def run_mapping(frames: Iterable[Frame], config: PipelineConfig = PipelineConfig(),
                classes: ClassSet | None = None) -> MapSession:
    session = MapSession(config, classes)
    for prepared in _prepared_stream(frames, config, classes):
        session.integrate(prepared)
    return session


@dataclass
class BenchmarkReport:
    per_frame: list[dict]
    one_shot: dict
    memory_bytes: int

    def stage_totals(self) -> dict:
        return {s: sum(t.get(s, 0.0) for t in self.per_frame) for s in FRAME_STAGES}

    def to_text(self) -> str:
        lines = ["# frame " + " ".join(FRAME_STAGES) + " total"]
        for i, t in enumerate(self.per_frame):
            vals = [t.get(s, 0.0) for s in FRAME_STAGES]
            lines.append(f"{i} " + " ".join(f"{v:.6f}" for v in vals) + f" {sum(vals):.6f}")
        totals = self.stage_totals()
        lines.append("total " + " ".join(f"{totals[s]:.6f}" for s in FRAME_STAGES)
                     + f" {sum(totals.values()):.6f}")
        for k, v in self.one_shot.items():
            lines.append(f"# {k} {v:.6f}")
        lines.append(f"# map_memory_bytes {self.memory_bytes}")
        return "\n".join(lines) + "\n"


def benchmark(frames: Iterable[Frame], config: PipelineConfig = PipelineConfig(),
              classes: ClassSet | None = None) -> BenchmarkReport:
    session = run_mapping(frames, config, classes)
    result = session.query() if session.frames_integrated else None
    return session_benchmark(session, result)


def session_benchmark(session: MapSession, result: QueryResult | None) -> BenchmarkReport:
    one_shot = dict(result.timings) if result is not None else {}
    return BenchmarkReport(session.timings, one_shot, session.map.memory_bytes())


# ---------------------------------------------------------------------- exports
def export_outputs(session: MapSession, result: QueryResult, out_dir, gt: GroundTruth | None = None,
                   timing: BenchmarkReport | None = None) -> dict:
    """Write mesh.ply, points.ply, superpoints.txt and, when available, metrics.txt and timing.txt."""
    from .ply import write_ply

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = result.mesh
    v = mesh.vertices.astype(np.float32)
    write_ply(out / "mesh.ply", {
        "x": v[:, 0], "y": v[:, 1], "z": v[:, 2],
        "semantic_id": mesh.semantic.astype(np.uint16), "instance_id": mesh.instance.astype(np.uint32),
        "superpoint_id": mesh.superpoint.astype(np.int32),
    }, mesh.faces)
    pred = session.labelled_points(result)
    p = pred.points.astype(np.float32)
    conf = np.array([result.confidence.get(int(i), 0.0) for i in pred.instance], dtype=np.float32)
    write_ply(out / "points.ply", {
        "x": p[:, 0], "y": p[:, 1], "z": p[:, 2],
        "semantic_id": pred.semantic.astype(np.uint16), "instance_id": pred.instance.astype(np.uint32),
        "confidence": conf, "superpoint_id": pred.superpoint.astype(np.int32),
    })
    lines = ["# label class instance"]
    for label in sorted(session.manager.labels):
        lines.append(f"{label} {result.semantic.get(label, BACKGROUND)} {result.instance.get(label, 0)}")
    (out / "superpoints.txt").write_text("\n".join(lines) + "\n")
    written = {"mesh": out / "mesh.ply", "points": out / "points.ply", "superpoints": out / "superpoints.txt"}
    if gt is not None:
        (out / "metrics.txt").write_text(session.evaluate(gt, result).to_text())
        written["metrics"] = out / "metrics.txt"
    if timing is not None:
        (out / "timing.txt").write_text(timing.to_text())
        written["timing"] = out / "timing.txt"
    return written


def prediction_from_points(vertex: dict) -> Prediction:
    """Rebuild a Prediction from the vertex table of an exported points.ply."""
    pts = np.stack([vertex["x"], vertex["y"], vertex["z"]], axis=1).astype(np.float64)
    ins = vertex["instance_id"].astype(np.int64)
    conf = {}
    for i, c in zip(ins.tolist(), vertex["confidence"].tolist()):
        if i:
            conf.setdefault(i, float(c))
    sp = vertex["superpoint_id"].astype(np.int64) if "superpoint_id" in vertex else None
    return Prediction(pts, vertex["semantic_id"].astype(np.int64), ins, conf, sp)
