"""Incremental semantic-instance mapping on a label-carrying TSDF with superpoints and graph refinement."""

from .config import PipelineConfig
from .core import BACKGROUND, CameraIntrinsics, ClassSet, Frame, Kind, PanopticInstance, Pose
from .evaluation import GroundTruth, MetricsReport, Prediction, evaluate
from .label_tsdf_map import LabelTsdfMap
from .pipeline import MapSession, benchmark, run_mapping
from .semantic_graph import SuperpointGraph
from .superpoint_manager import SuperpointManager

__all__ = [
    "BACKGROUND", "CameraIntrinsics", "ClassSet", "Frame", "GroundTruth", "Kind", "LabelTsdfMap", "MapSession",
    "MetricsReport", "PanopticInstance", "PipelineConfig", "Pose", "Prediction", "SuperpointGraph",
    "SuperpointManager", "benchmark", "evaluate", "run_mapping",
]
