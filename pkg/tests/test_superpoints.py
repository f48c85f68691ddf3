from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semantic_mapping.core import BACKGROUND, Kind
from semantic_mapping.label_tsdf_map import LabelTsdfMap
from semantic_mapping.semantic_graph import SuperpointGraph
from semantic_mapping.superpoint_manager import EmptySurfaceError, OverlapMatrix, SuperpointManager
from semantic_mapping.surface_fusion import Surface

CHAIR, TABLE = 4, 5
VOX = 0.01


def _points(start, n):
    """n points in n distinct voxels along x, starting at voxel index `start`."""
    x = (np.arange(start, start + n) + 0.5) * VOX
    return np.column_stack([x, np.full(n, 0.005), np.full(n, 0.005)])


def _surface(points, instance_id=1, category=CHAIR):
    n = len(points)
    return Surface(1, 1, instance_id, category, Kind.THING, 0.8, np.zeros(n, int), np.arange(n), points)


def _manager(**kw):
    m = LabelTsdfMap(VOX)
    g = SuperpointGraph()
    return SuperpointManager(m, g, **kw), m, g


def test_surface_over_virgin_space_gets_new_label():
    mgr, m, _ = _manager()
    label, sig = mgr.assign_surface(_surface(_points(0, 50)))
    assert label == 1 and sig == set()
    assert m.votes_at(_points(0, 1)[0]) == {1: 1}


def test_assigned_to_majority_overlap():
    mgr, m, _ = _manager()
    m.cast_votes(_points(0, 60), 3)
    label, sig = mgr.assign_surface(_surface(_points(0, 100)))
    assert label == 3 and sig == {3}


def test_tied_overlap_goes_to_smaller_label():
    mgr, m, _ = _manager()
    m.cast_votes(_points(0, 30), 7)
    m.cast_votes(_points(30, 30), 3)
    label, sig = mgr.assign_surface(_surface(_points(0, 100)))
    assert label == 3 and sig == {3, 7}


def test_overlap_below_threshold_mints_label():
    mgr, m, _ = _manager()
    m.cast_votes(_points(0, 9), 3)
    mgr.next_label = 10
    label, sig = mgr.assign_surface(_surface(_points(0, 20)))
    assert label == 10 and sig == set()
    assert mgr.threshold(20) == 10 and mgr.threshold(100) == 25


def test_empty_surface_rejected():
    mgr, _, _ = _manager()
    with pytest.raises(EmptySurfaceError):
        mgr.assign_surface(_surface(np.zeros((0, 3))))


def test_overlap_matrix_pairs():
    mgr, _, _ = _manager()
    mgr.update_overlap_matrix({3, 7})
    assert mgr.overlap.counts == {(3, 7): 1}
    mgr.update_overlap_matrix({3})
    assert mgr.overlap.counts == {(3, 7): 1}
    mgr.update_overlap_matrix({9, 3, 7})
    assert mgr.overlap.counts == {(3, 7): 2, (3, 9): 1, (7, 9): 1}


def _merge_setup(count, c3, c7, consistency=True):
    mgr, m, g = _manager(semantic_consistency=consistency)
    for label, cat in ((3, c3), (7, c7)):
        mgr.labels.add(label)
        g.add_vertex(label)
        if cat != BACKGROUND:
            g.node_conf[label][cat] = 2.0
    m.cast_votes(_points(0, 5), 3)
    m.cast_votes(_points(5, 5), 7)
    mgr.overlap.add(3, 7, count)
    return mgr, m, g


def test_merge_same_class():
    mgr, m, g = _merge_setup(4, CHAIR, CHAIR)
    (rec,) = mgr.merge_pass(0)
    assert (rec.survivor, rec.absorbed) == (3, 7)
    assert mgr.labels == {3} and mgr.resolve(7) == 3
    assert m.superpoint_labels() == [3] and g.node_conf[3] == {CHAIR: 4.0}


def test_no_merge_across_classes():
    mgr, _, _ = _merge_setup(4, CHAIR, TABLE)
    assert mgr.merge_pass() == []
    mgr, _, _ = _merge_setup(4, CHAIR, TABLE, consistency=False)
    assert len(mgr.merge_pass()) == 1


def test_no_merge_at_threshold():
    mgr, _, _ = _merge_setup(3, CHAIR, CHAIR)
    assert mgr.merge_pass() == []


def test_background_merges_with_anything():
    mgr, _, g = _merge_setup(4, BACKGROUND, TABLE)
    (rec,) = mgr.merge_pass()
    assert rec.survivor_class == BACKGROUND and rec.absorbed_class == TABLE
    assert mgr.semantic_label(3) == TABLE


def test_superpoint_instance_tie_breaks_to_smaller_id():
    mgr, _, _ = _manager()
    mgr.instance_counts[3] = Counter({5: 2, 2: 2, 9: 1})
    assert mgr.superpoint_instance(3) == 2
    assert mgr.superpoint_instance(4) is None


def test_association_reuses_persistent_instance():
    mgr, _, _ = _manager()
    s1 = _surface(_points(0, 40), instance_id=1)
    l1, _ = mgr.assign_surface(s1)
    first = mgr.associate_instances([s1], [l1])
    s2 = _surface(_points(0, 40), instance_id=4)
    l2, _ = mgr.assign_surface(s2)
    second = mgr.associate_instances([s2], [l2])
    assert l1 == l2 and first[1] == second[4]
    # a different category never joins the same persistent instance
    s3 = _surface(_points(0, 40), instance_id=2, category=TABLE)
    l3, _ = mgr.assign_surface(s3)
    assert mgr.associate_instances([s3], [l3])[2] != first[1]


# ------------------------------------------------------------------ properties
ops = st.lists(
    st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 3)), min_size=1, max_size=30
)


@settings(max_examples=80, deadline=None)
@given(ops=ops, classes=st.lists(st.sampled_from([BACKGROUND, CHAIR, TABLE]), min_size=8, max_size=8),
       theta=st.integers(0, 4))
def test_merge_pass_invariants(ops, classes, theta):
    mgr, m, g = _manager(theta_merge=theta)
    for label in range(1, 9):
        mgr.labels.add(label)
        g.add_vertex(label)
        if classes[label - 1] != BACKGROUND:
            g.node_conf[label][classes[label - 1]] = float(label)
        m.cast_votes(_points(10 * label, 3), label)
    for a, b, n in ops:
        mgr.overlap.add(a, b, n)
    votes, node_mass = m.total_votes(), g.total_node_mass()
    records = mgr.merge_pass()
    # safety: never unite two distinct non-background classes
    for r in records:
        assert r.survivor_class == r.absorbed_class or BACKGROUND in (r.survivor_class, r.absorbed_class)
        assert r.overlap > theta and r.survivor < r.absorbed
    # fixed point
    for (a, b), n in mgr.overlap.counts.items():
        assert not (n > theta and mgr.consistent(a, b))
    assert m.total_votes() == votes
    assert g.total_node_mass() == pytest.approx(node_mass)
    assert set(m.superpoint_labels()) == mgr.labels


@given(st.lists(st.tuples(st.integers(1, 6), st.integers(1, 6)), max_size=20))
def test_overlap_matrix_symmetric(pairs):
    om = OverlapMatrix()
    for a, b in pairs:
        om.add(a, b)
    for (a, b), n in om.counts.items():
        assert a < b and n >= 1
        assert om.get(a, b) == om.get(b, a) == n
