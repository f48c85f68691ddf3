"""Instance segmentation metrics on labelled point sets: mAP, N_TP, PQ and superpoint IoU.

Predictions are transferred onto ground-truth points by nearest neighbour,
so every metric is computed over sets of ground-truth point indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree


@dataclass
class GroundTruth:
    points: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.semantic = np.asarray(self.semantic, dtype=np.int64)
        self.instance = np.asarray(self.instance, dtype=np.int64)

    def instances(self, classes=None) -> list["InstanceSet"]:
        out = []
        for iid in np.unique(self.instance):
            if iid == 0:
                continue
            idx = np.flatnonzero(self.instance == iid)
            cls = int(np.bincount(self.semantic[idx]).argmax())
            if classes is None or cls in classes:
                out.append(InstanceSet(int(iid), cls, frozenset(idx.tolist())))
        return out


@dataclass
class Prediction:
    points: np.ndarray
    semantic: np.ndarray
    instance: np.ndarray
    confidence: dict = field(default_factory=dict)
    superpoint: np.ndarray | None = None


@dataclass(frozen=True)
class InstanceSet:
    id: int
    category: int
    points: frozenset
    confidence: float = 1.0


def instance_iou(pred, gt) -> float:
    a = pred.points if isinstance(pred, InstanceSet) else frozenset(pred)
    b = gt.points if isinstance(gt, InstanceSet) else frozenset(gt)
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def transfer_labels(pred: Prediction, gt: GroundTruth, radius: float = 0.03):
    """Predicted (semantic, instance, superpoint) of the nearest labelled prediction point per GT point.

    GT points without a prediction point within `radius` get zeros.
    """
    n = len(gt.points)
    sem = np.zeros(n, dtype=np.int64)
    ins = np.zeros(n, dtype=np.int64)
    sp = np.zeros(n, dtype=np.int64)
    keep = pred.instance > 0
    if pred.superpoint is not None:
        keep = keep | (pred.superpoint > 0)
    if not keep.any() or n == 0:
        return sem, ins, sp
    pts = np.asarray(pred.points)[keep]
    tree = cKDTree(pts)
    dist, nn = tree.query(gt.points, k=1, distance_upper_bound=radius)
    hit = np.isfinite(dist)
    sem[hit] = pred.semantic[keep][nn[hit]]
    ins[hit] = pred.instance[keep][nn[hit]]
    if pred.superpoint is not None:
        sp[hit] = pred.superpoint[keep][nn[hit]]
    return sem, ins, sp


def predicted_instances(sem: np.ndarray, ins: np.ndarray, confidence: dict) -> list[InstanceSet]:
    out = []
    for iid in np.unique(ins):
        if iid == 0:
            continue
        idx = np.flatnonzero(ins == iid)
        cls = int(np.bincount(sem[idx]).argmax())
        out.append(InstanceSet(int(iid), cls, frozenset(idx.tolist()), float(confidence.get(int(iid), 1.0))))
    return out


def _by_class(items):
    out: dict[int, list] = {}
    for it in items:
        out.setdefault(it.category, []).append(it)
    return out


def _greedy_matches(preds: list[InstanceSet], gts: list[InstanceSet], iou_thresh: float):
    """Confidence-ordered one-to-one matching at IoU >= threshold. Returns [(pred, gt or None, iou)]."""
    order = sorted(preds, key=lambda p: (-p.confidence, p.id))
    used = set()
    out = []
    for p in order:
        best, best_iou = None, iou_thresh
        for g in gts:
            if g.id in used:
                continue
            iou = instance_iou(p, g)
            if iou >= best_iou and (best is None or iou > best_iou or g.id < best.id):
                best, best_iou = g, iou
        if best is not None:
            used.add(best.id)
            out.append((p, best, best_iou))
        else:
            out.append((p, None, 0.0))
    return out


def average_precision(tp_flags: list[bool], n_gt: int) -> float:
    """Area under the all-point interpolated precision/recall curve."""
    if n_gt == 0 or not tp_flags:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    fp = np.cumsum(~np.asarray(tp_flags, dtype=bool))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def mean_average_precision(preds: list[InstanceSet], gts: list[InstanceSet], iou_thresh: float = 0.5):
    """(per-class AP, mean over classes with at least one GT instance), as fractions."""
    pc, gc = _by_class(preds), _by_class(gts)
    per_class = {}
    for cls in sorted(gc):
        matches = _greedy_matches(pc.get(cls, []), gc[cls], iou_thresh)
        per_class[cls] = average_precision([g is not None for _, g, _ in matches], len(gc[cls]))
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


def count_true_positives(preds, gts, iou_thresh: float = 0.5) -> int:
    pc, gc = _by_class(preds), _by_class(gts)
    return sum(
        sum(g is not None for _, g, _ in _greedy_matches(pc.get(cls, []), gc[cls], iou_thresh)) for cls in gc
    )


def pq_matches(preds, gts, iou_thresh: float = 0.5):
    """Pairs with IoU strictly above the threshold; unique for thresholds >= 0.5."""
    pairs = []
    for p in preds:
        for g in gts:
            if p.category == g.category:
                iou = instance_iou(p, g)
                if iou > iou_thresh:
                    pairs.append((p, g, iou))
    return pairs


def panoptic_quality(preds, gts, iou_thresh: float = 0.5):
    """(per-class PQ, mean over classes present in GT or predictions), as fractions."""
    pc, gc = _by_class(preds), _by_class(gts)
    per_class = {}
    for cls in sorted(set(pc) | set(gc)):
        p, g = pc.get(cls, []), gc.get(cls, [])
        pairs = pq_matches(p, g, iou_thresh)
        tp = len(pairs)
        fp = len(p) - len({m[0].id for m in pairs})
        fn = len(g) - len({m[1].id for m in pairs})
        denom = tp + 0.5 * fp + 0.5 * fn
        per_class[cls] = sum(m[2] for m in pairs) / denom if denom else 0.0
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


def superpoint_iou(superpoints: dict[int, set] | list[set], gts: list[InstanceSet]) -> float:
    """Per GT instance, the sum of IoUs with every superpoint; averaged over instances."""
    sets = list(superpoints.values()) if isinstance(superpoints, dict) else list(superpoints)
    sets = [frozenset(s) for s in sets if s]
    if not gts:
        return 0.0
    total = 0.0
    for g in gts:
        total += sum(instance_iou(s, g) for s in sets if s & g.points)
    return total / len(gts)


@dataclass
class MetricsReport:
    per_class: dict
    aggregate: dict

    FIELDS = ("ap50", "ap75", "ntp50", "ntp75", "pq50", "pq75", "iou_ls")

    def to_text(self) -> str:
        lines = ["# class " + " ".join(self.FIELDS)]
        for cls in sorted(self.per_class):
            row = self.per_class[cls]
            lines.append(f"{cls} " + " ".join(_fmt(row[f]) for f in self.FIELDS))
        lines.append("all " + " ".join(_fmt(self.aggregate[f]) for f in self.FIELDS))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        per_class, agg = {}, {}
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            key, *vals = line.split()
            row = {f: (int(v) if f.startswith("ntp") else float(v)) for f, v in zip(cls.FIELDS, vals)}
            if key == "all":
                agg = row
            else:
                per_class[int(key)] = row
        return cls(per_class, agg)


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else f"{v:.4f}"


def evaluate(pred: Prediction, gt: GroundTruth, classes=None, radius: float = 0.03,
             min_region_size: int = 100) -> MetricsReport:
    """Full metric record; mAP and PQ are reported in percent, IoU_LS as a fraction.

    Predicted instances covering fewer than `min_region_size` GT points are
    ignored, as in common instance-segmentation benchmarks.
    """
    sem, ins, sp = transfer_labels(pred, gt, radius)
    preds = [p for p in predicted_instances(sem, ins, pred.confidence) if len(p.points) >= min_region_size]
    if classes is not None:
        preds = [p for p in preds if p.category in classes]
    gts = gt.instances(classes)

    ap50, map50 = mean_average_precision(preds, gts, 0.5)
    ap75, map75 = mean_average_precision(preds, gts, 0.75)
    pq50, mpq50 = panoptic_quality(preds, gts, 0.5)
    pq75, mpq75 = panoptic_quality(preds, gts, 0.75)
    sp_sets = {}
    for label in np.unique(sp):
        if label > 0:
            sp_sets[int(label)] = frozenset(np.flatnonzero(sp == label).tolist())
    gc = _by_class(gts)
    pc = _by_class(preds)
    per_class = {}
    for c in sorted(set(gc) | set(pq50)):
        per_class[c] = {
            "ap50": 100 * ap50.get(c, 0.0),
            "ap75": 100 * ap75.get(c, 0.0),
            "ntp50": count_true_positives(pc.get(c, []), gc.get(c, []), 0.5),
            "ntp75": count_true_positives(pc.get(c, []), gc.get(c, []), 0.75),
            "pq50": 100 * pq50.get(c, 0.0),
            "pq75": 100 * pq75.get(c, 0.0),
            "iou_ls": superpoint_iou(sp_sets, gc.get(c, [])),
        }
    aggregate = {
        "ap50": 100 * map50,
        "ap75": 100 * map75,
        "ntp50": count_true_positives(preds, gts, 0.5),
        "ntp75": count_true_positives(preds, gts, 0.75),
        "pq50": 100 * mpq50,
        "pq75": 100 * mpq75,
        "iou_ls": float(np.mean([per_class[c]["iou_ls"] for c in gc])) if gc else 0.0,
    }
    return MetricsReport(per_class, aggregate)
