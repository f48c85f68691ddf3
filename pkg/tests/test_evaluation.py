import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semantic_mapping.evaluation import (
    GroundTruth, InstanceSet, MetricsReport, Prediction, average_precision, count_true_positives, evaluate,
    instance_iou, mean_average_precision, panoptic_quality, pq_matches, superpoint_iou,
)

CHAIR = 4


def _inst(iid, points, conf=1.0, cat=CHAIR):
    return InstanceSet(iid, cat, frozenset(points), conf)


def test_instance_iou():
    a = _inst(1, range(100))
    assert instance_iou(a, a) == 1.0
    assert instance_iou(a, _inst(2, range(100, 200))) == 0.0
    assert instance_iou(_inst(1, range(75)), _inst(2, range(25, 100))) == 0.5
    assert instance_iou(set(), set()) == 0.0


def _ap_fixture():
    gts = [_inst(1, range(0, 10)), _inst(2, range(10, 20))]
    preds = [_inst(1, range(0, 10), 0.9), _inst(2, range(30, 40), 0.8), _inst(3, range(10, 20), 0.7)]
    return preds, gts


def test_average_precision_hand_computed():
    # precision/recall points (1, .5), (.5, .5), (2/3, 1); interpolated area .5 * 1 + .5 * 2/3
    assert average_precision([True, False, True], 2) == pytest.approx(5 / 6, abs=1e-6)
    preds, gts = _ap_fixture()
    per_class, mean = mean_average_precision(preds, gts, 0.5)
    assert per_class == {CHAIR: pytest.approx(0.8333333, abs=1e-6)} and mean == pytest.approx(5 / 6, abs=1e-6)


def test_map_perfect_and_empty():
    gts = [_inst(1, range(10)), _inst(2, range(10, 20), cat=5)]
    assert mean_average_precision(gts, gts)[1] == 1.0
    assert mean_average_precision([], gts) == ({CHAIR: 0.0, 5: 0.0}, 0.0)
    assert mean_average_precision([], []) == ({}, 0.0)


def test_panoptic_quality_examples():
    gts = [_inst(1, range(10)), _inst(2, range(100, 110))]
    pred = [_inst(1, range(8))]  # IoU .8 with the first object, second is missed
    assert panoptic_quality(pred, gts)[1] == pytest.approx(0.8 / 1.5, abs=1e-6)
    assert panoptic_quality(gts, gts)[1] == 1.0
    assert panoptic_quality([_inst(5, range(50, 60))], gts)[1] == 0.0


def test_superpoint_iou_examples():
    gts = [_inst(1, range(10)), _inst(2, range(10, 20))]
    assert superpoint_iou([set(range(10)), set(range(10, 20))], gts) == 1.0
    # two halves of one object: each half has IoU 5 / 10 with it
    halves = superpoint_iou([set(range(5)), set(range(5, 10))], gts[:1])
    assert halves == pytest.approx(1.0, abs=1e-6)
    assert superpoint_iou([set(range(20))], gts) == pytest.approx(0.5, abs=1e-6)
    assert superpoint_iou([], []) == 0.0


def test_count_true_positives():
    gts = [_inst(i, range(10 * i, 10 * i + 10)) for i in range(5)]
    assert count_true_positives(gts, gts) == 5
    assert count_true_positives([_inst(9, range(0, 3))], gts) == 0
    preds = [_inst(1, range(0, 10)), _inst(2, range(10, 19)), _inst(3, range(200, 210))]
    assert count_true_positives(preds, gts[:3]) == 2


def test_greedy_matching_is_one_to_one():
    gts = [_inst(1, range(10))]
    preds = [_inst(1, range(10), 0.5), _inst(2, range(10), 0.9)]
    assert count_true_positives(preds, gts) == 1
    assert mean_average_precision(preds, gts)[1] == 1.0


def _cloud():
    pts = np.array([[x * 0.01, 0.0, 0.0] for x in range(300)])
    sem = np.repeat([CHAIR, 5, 1], 100)
    ins = np.repeat([1, 2, 3], 100)
    return pts, sem, ins


def test_evaluate_perfect_prediction():
    pts, sem, ins = _cloud()
    gt = GroundTruth(pts, sem, ins)
    pred = Prediction(pts + 0.001, sem, ins, {1: 0.9, 2: 0.8, 3: 0.5}, superpoint=ins)
    rep = evaluate(pred, gt, classes={CHAIR, 5})
    assert rep.aggregate == {"ap50": 100.0, "ap75": 100.0, "ntp50": 2, "ntp75": 2, "pq50": 100.0,
                             "pq75": 100.0, "iou_ls": 1.0}
    assert sorted(rep.per_class) == [CHAIR, 5]


def test_evaluate_drops_small_and_far_predictions():
    pts, sem, ins = _cloud()
    gt = GroundTruth(pts, sem, ins)
    far = Prediction(pts + 1.0, sem, ins)
    assert evaluate(far, gt, classes={CHAIR, 5}).aggregate["ap50"] == 0.0
    ins_small = ins.copy()
    ins_small[50:100] = 7
    rep = evaluate(Prediction(pts, sem, ins_small), gt, classes={CHAIR, 5}, min_region_size=60)
    assert rep.per_class[CHAIR]["ntp50"] == 0 and rep.per_class[5]["ntp50"] == 1


def test_report_text_round_trip():
    pts, sem, ins = _cloud()
    rep = evaluate(Prediction(pts, sem, ins, superpoint=ins), GroundTruth(pts, sem, ins), classes={CHAIR, 5})
    back = MetricsReport.from_text(rep.to_text())
    assert back.to_text() == rep.to_text()
    assert back.aggregate["ntp50"] == 2


# ------------------------------------------------------------------ properties
labels = st.lists(st.integers(0, 4), min_size=30, max_size=30)


def _sets(assign, cat=CHAIR):
    out = {}
    for i, a in enumerate(assign):
        if a:
            out.setdefault(a, set()).add(i)
    return [_inst(k, v, cat=cat) for k, v in sorted(out.items())]


@settings(max_examples=200)
@given(labels, labels, st.floats(0.5, 0.95))
def test_pq_matches_are_unique(p, g, thresh):
    pairs = pq_matches(_sets(p), _sets(g), thresh)
    assert len({m[0].id for m in pairs}) == len(pairs)
    assert len({m[1].id for m in pairs}) == len(pairs)
    _, pq = panoptic_quality(_sets(p), _sets(g), thresh)
    assert 0.0 <= pq <= 1.0


@settings(max_examples=100)
@given(labels, labels, st.lists(st.floats(0, 1), min_size=5, max_size=5))
def test_metric_ranges(p, g, conf):
    preds = [InstanceSet(o.id, o.category, o.points, conf[o.id]) for o in _sets(p)]
    gts = _sets(g)
    _, m = mean_average_precision(preds, gts)
    assert 0.0 <= m <= 1.0
    assert count_true_positives(preds, gts) <= min(len(preds), len(gts))
    assert superpoint_iou([o.points for o in preds], gts) <= 1.0 + 1e-12
