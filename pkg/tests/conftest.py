import time

import numpy as np
import pytest

from semantic_mapping.config import PipelineConfig
from semantic_mapping.core import CameraIntrinsics, Frame, Kind, PanopticInstance, Pose
from semantic_mapping.pipeline import run_mapping
from semantic_mapping.synth import ground_truth_points, render_sequence, three_object_scene


def small_intrinsics(width=40, height=30, f=40.0):
    return CameraIntrinsics(f, f, (width - 1) / 2, (height - 1) / 2, width, height)


def plane_frame(z=1.0, intr=None, mask=None, instances=None, pose=None, index=0):
    """Fronto-parallel plane at depth z, optionally with a panoptic mask."""
    intr = intr or small_intrinsics()
    depth = np.full(intr.shape, float(z))
    if mask is None:
        mask = np.zeros(intr.shape, dtype=np.int64)
    return Frame(depth, mask, instances or [], pose or Pose.identity(), intr, index)


def thing(iid, cat=4, score=0.8):
    return PanopticInstance(iid, cat, Kind.THING, score)


@pytest.fixture(scope="session")
def oracle_scene():
    scene = three_object_scene(60)
    frames = render_sequence(scene, seed=0)
    gt = ground_truth_points(scene, 0.01, scene.trajectory)
    return scene, frames, gt


@pytest.fixture(scope="session")
def clean_run(oracle_scene):
    """Zero-noise mapping of the three-object scene, shared by the slow tests."""
    scene, frames, gt = oracle_scene
    t0 = time.perf_counter()
    session = run_mapping(frames, PipelineConfig(), scene.classes)
    result = session.query()
    seconds = time.perf_counter() - t0
    report = session.evaluate(gt, result)
    return session, result, report, seconds


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
