import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semantic_mapping.core import BACKGROUND
from semantic_mapping.maxflow import FlowNetwork, max_flow_min_cut
from semantic_mapping.regularizer import (
    EnergyProblem, SemiMetricError, ZeroEvidenceError, alpha_beta_swap, binary_potential, check_semimetric,
    problem_from_graph, regularize, total_energy, unary_potential,
)
from semantic_mapping.semantic_graph import SuperpointGraph

from oracles import cut_capacity, exhaustive_minimum, random_network, random_problem, reference_max_flow

CHAIR, TABLE = 4, 5


def _problem(conf, edges=None, cands=None, **kw):
    cands = cands or {n: tuple(sorted(c)) for n, c in conf.items()}
    return EnergyProblem(conf, edges or {}, cands, **kw)


# ---------------------------------------------------------------------- unary
def test_unary_examples():
    p = _problem({1: {CHAIR: 3.0, TABLE: 1.0}, 2: {CHAIR: 2.0}})
    assert abs(unary_potential(p, 1, CHAIR) - 0.28768207245178085) < 1e-9
    assert abs(unary_potential(p, 1, CHAIR) + math.log(0.75)) < 1e-12
    assert unary_potential(p, 1, TABLE) == pytest.approx(-math.log(0.25), abs=1e-9)
    assert unary_potential(p, 2, CHAIR) == 0.0


def test_unary_floor_for_zero_probability():
    p = _problem({1: {CHAIR: 3.0}}, cands={1: (BACKGROUND, CHAIR)}, eps_prob=1e-6)
    assert unary_potential(p, 1, BACKGROUND) == pytest.approx(-math.log(1e-6))


def test_unary_zero_evidence():
    p = _problem({1: {}}, cands={1: (BACKGROUND,)})
    with pytest.raises(ZeroEvidenceError):
        unary_potential(p, 1, BACKGROUND)


@given(st.dictionaries(st.integers(1, 6), st.floats(0.01, 100), min_size=1), st.floats(0.01, 100))
def test_unary_scale_invariant(conf, k):
    a = _problem({1: conf})
    b = _problem({1: {c: v * k for c, v in conf.items()}})
    for c in conf:
        assert unary_potential(a, 1, c) == pytest.approx(unary_potential(b, 1, c), rel=1e-9, abs=1e-12)


# --------------------------------------------------------------------- binary
def test_binary_examples():
    p = _problem({1: {CHAIR: 2.0}, 2: {TABLE: 1.0}}, {(1, 2): 4.0}, cands={1: (CHAIR, TABLE), 2: (CHAIR, TABLE)})
    assert binary_potential(p, 1, 2, CHAIR, CHAIR) == 0.0
    assert abs(binary_potential(p, 1, 2, CHAIR, TABLE) - 5.51819161757164) < 1e-6
    assert binary_potential(p, 1, 2, CHAIR, TABLE) == pytest.approx(15 * math.exp(-1), abs=1e-12)
    assert binary_potential(p, 2, 1, TABLE, CHAIR) == binary_potential(p, 1, 2, CHAIR, TABLE)


def test_binary_vanishes_with_strong_cross_evidence():
    p = _problem({1: {CHAIR: 1e4}, 2: {TABLE: 1e4}}, {(1, 2): 1.0})
    assert binary_potential(p, 1, 2, CHAIR, TABLE) < 1e-12


def test_binary_without_edge_evidence_is_zero():
    p = _problem({1: {CHAIR: 1.0}, 2: {TABLE: 1.0}})
    assert binary_potential(p, 1, 2, CHAIR, TABLE) == 0.0


def test_semimetric_check():
    p = _problem({1: {CHAIR: 1.0}, 2: {TABLE: 1.0}}, {(1, 2): 1.0}, cands={1: (CHAIR, TABLE), 2: (CHAIR, TABLE)})
    check_semimetric(p)
    p.pairwise = lambda a, b, ca, cb: 1.0
    with pytest.raises(SemiMetricError):
        check_semimetric(p)
    p.pairwise = lambda a, b, ca, cb: 0.0 if ca == cb else float(a < b) + ca
    with pytest.raises(SemiMetricError):
        alpha_beta_swap(p)


# --------------------------------------------------------------------- energy
def test_total_energy_examples():
    one = _problem({1: {CHAIR: 3.0, TABLE: 1.0}})
    assert total_energy(one, {1: CHAIR}) == pytest.approx(-math.log(0.75))
    two = _problem({1: {CHAIR: 3.0, TABLE: 1.0}, 2: {CHAIR: 1.0, TABLE: 1.0}}, {(1, 2): 2.0})
    assert total_energy(two, {1: CHAIR, 2: CHAIR}) == pytest.approx(-math.log(0.75) - math.log(0.5))

    conf = {1: {CHAIR: 3.0, TABLE: 1.0}, 2: {CHAIR: 1.0, TABLE: 1.0}, 3: {TABLE: 2.0}}
    path = _problem(conf, {(1, 2): 2.0, (2, 3): 4.0}, cands={n: (CHAIR, TABLE) for n in conf})
    lab = {1: CHAIR, 2: TABLE, 3: TABLE}
    # unaries -ln .75, -ln .5, -ln 1; edge (1,2) has k = 3 * 1 / 2; edge (2,3) agrees
    expected = -math.log(0.75) - math.log(0.5) + 15 * math.exp(-1.5 / (2 * 0.5**2))
    assert total_energy(path, lab) == pytest.approx(expected, abs=1e-12)
    # node 3 has no chair evidence, so labelling it chair pays the floor
    lab = {1: CHAIR, 2: CHAIR, 3: CHAIR}
    expected = -math.log(0.75) - math.log(0.5) - math.log(1e-6)
    assert total_energy(path, lab) == pytest.approx(expected, abs=1e-12)


# ----------------------------------------------------------------------- swap
def test_swap_keeps_optimum():
    p = _problem({1: {CHAIR: 3.0}, 2: {CHAIR: 2.0}}, {(1, 2): 1.0})
    res = alpha_beta_swap(p)
    assert res.labeling == {1: CHAIR, 2: CHAIR} and res.moves == 0


def test_swap_matches_exhaustive_on_six_nodes():
    for seed in range(200):
        p = random_problem(seed)
        if len(p.nodes) == 6 and len(p.classes) == 3:
            break
    best, evaluations = exhaustive_minimum(p)
    assert evaluations == 3**6
    assert alpha_beta_swap(p).energy == pytest.approx(best, abs=1e-9)


def test_swap_smooths_noisy_node():
    conf = {n: {1: 5.0, 2: 1.0} for n in range(5)}
    conf[2] = {1: 1.0, 2: 1.5}
    edges = {(n, n + 1): 100.0 for n in range(4)}
    p = _problem(conf, edges, cands={n: (1, 2) for n in conf})
    assert p.initial_labeling()[2] == 2
    res = alpha_beta_swap(p)
    assert res.labeling == {n: 1 for n in range(5)}
    assert res.energy == pytest.approx(exhaustive_minimum(p)[0])
    assert res.energy < res.initial_energy


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_swap_never_increases_energy(seed):
    p = random_problem(seed)
    res = alpha_beta_swap(p)
    assert res.energy <= res.initial_energy + 1e-12
    assert all(b < a for a, b in zip(res.history, res.history[1:]))
    assert all(b <= a for a, b in zip(res.sweep_energies, res.sweep_energies[1:]))
    assert res.energy == pytest.approx(total_energy(p, res.labeling))
    assert res.energy >= exhaustive_minimum(p)[0] - 1e-9


def test_regularize_pins_zero_evidence_nodes():
    g = SuperpointGraph()
    g.node_conf = {1: {CHAIR: 3.0}, 2: {}, 3: {TABLE: 1.0, CHAIR: 0.5}}
    g.add_edge_confidence(1, 3, CHAIR, 1.0)
    problem, pinned = problem_from_graph(g)
    assert pinned == [2]
    assert problem.candidates[3] == (BACKGROUND, CHAIR, TABLE)
    labels = regularize(g)
    assert labels[2] == BACKGROUND and labels[1] == CHAIR
    assert regularize(g, enabled=False) == {1: CHAIR, 2: BACKGROUND, 3: TABLE}


# ------------------------------------------------------------------- max-flow
def _flow(edges, n, s, t):
    net = FlowNetwork(n)
    for u, v, c in edges:
        net.add_edge(u, v, c)
    return max_flow_min_cut(net, s, t)


def test_single_edge():
    assert _flow([(0, 1, 5)], 2, 0, 1) == (5, {0})


def test_diamond():
    # s=0, a=1, b=2, t=3; both {s} and {s, a, b} are minimum cuts of capacity 5
    edges = [(0, 1, 3), (0, 2, 2), (1, 3, 2), (2, 3, 3), (1, 2, 1)]
    flow, side = _flow(edges, 4, 0, 3)
    assert flow == 5
    assert cut_capacity(edges, side) == 5


def test_zero_capacity_network():
    assert _flow([(0, 1, 0), (1, 2, 0)], 3, 0, 2) == (0, {0})


def test_network_rejects_bad_input():
    with pytest.raises(ValueError):
        FlowNetwork(2).add_edge(0, 1, -1)
    with pytest.raises(ValueError):
        max_flow_min_cut(FlowNetwork(2), 1, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31))
def test_max_flow_equals_min_cut_and_reference(seed):
    net, edges, n = random_network(seed)
    flow, side = max_flow_min_cut(net, 0, n - 1)
    assert 0 in side and n - 1 not in side
    assert flow == cut_capacity(edges, side)
    assert flow == reference_max_flow(edges, n, 0, n - 1)
