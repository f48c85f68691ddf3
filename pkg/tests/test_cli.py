import json

import pytest

from semantic_mapping.cli import main
from semantic_mapping.evaluation import MetricsReport


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "seq"
    assert main(["synth", "--out", str(out), "--frames", "8", "--width", "64", "--height", "48",
                 "--gt-resolution", "0.02"]) == 0
    return out


def test_synth_layout(dataset):
    names = {p.name for p in dataset.iterdir()}
    assert {"intrinsics.txt", "poses.txt", "classes.txt", "depth", "panoptic", "gt_points.ply"} <= names
    assert len(list((dataset / "depth").glob("*.png"))) == 8


def test_map_then_eval(tmp_path, dataset, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("voxel_size = 0.02\ntruncation = 0.08\neval_min_region = 10\n")
    out = tmp_path / "out"
    assert main(["map", str(dataset), "--config", str(cfg), "--out", str(out)]) == 0
    for name in ("mesh.ply", "points.ply", "superpoints.txt", "metrics.txt", "timing.txt"):
        assert (out / name).exists()
    capsys.readouterr()
    assert main(["eval", "--pred", str(out / "points.ply"), "--gt", str(dataset / "gt_points.ply"),
                 "--classes", str(dataset / "classes.txt"), "--config", str(cfg),
                 "--out", str(tmp_path / "m.txt")]) == 0
    printed = capsys.readouterr().out
    assert printed == (tmp_path / "m.txt").read_text()
    # scoring the export reproduces the metrics written by `map`
    assert MetricsReport.from_text(printed).aggregate == \
        MetricsReport.from_text((out / "metrics.txt").read_text()).aggregate


def test_bench(tmp_path, dataset, capsys):
    assert main(["bench", str(dataset), "--out", str(tmp_path / "t.txt")]) == 0
    assert capsys.readouterr().out.startswith("# frame segmentation")


def test_synth_from_json_with_noise(tmp_path):
    scene = {"objects": [{"shape": "sphere", "center": [0, 0, 0.2], "size": [0.15], "category": 5,
                          "instance_id": 1}],
             "room": {"lo": [-1, -1, 0], "hi": [1, 1, 2]},
             "camera": {"width": 32, "height": 24}, "orbit": {"frames": 3, "radius": 0.8}}
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene))
    out = tmp_path / "seq"
    assert main(["synth", "--scene", str(path), "--out", str(out), "--pose-rot-deg", "0.1",
                 "--mask-px", "1"]) == 0
    assert len((out / "poses.txt").read_text().splitlines()) == 3


def test_errors_exit_with_code_2(tmp_path):
    assert main(["map", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope = 1\n")
    assert main(["bench", str(tmp_path), "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])
