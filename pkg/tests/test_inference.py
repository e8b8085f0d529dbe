import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jvgn.checks import random_factor_graph
from jvgn.inference import (BinaryFactor, FactorGraph, GroundingResult, NonFiniteMessageError,
                            build_factor_graph, ground, propagate, run_belief_propagation, sweep)
from jvgn.oracle import brute_force_conditional, brute_force_marginals
from jvgn.scene_graph import SceneGraph, SgEdge, SgNode

PSI1, PSI2 = [0.6, 0.4], [0.5, 0.5]
PSI_E = [[0.35, 0.15], [0.10, 0.40]]


def chain(m):
    nodes = tuple(SgNode(i, ("x",), ()) for i in range(m))
    return SceneGraph(nodes, tuple(SgEdge(i, ("r",), i + 1) for i in range(m - 1)), 0)


MAN_ON_SKIS = SceneGraph((SgNode(0, ("man",), ()), SgNode(1, ("jacket",), (("red",),)), SgNode(2, ("skis",), ())),
                  (SgEdge(0, ("in",), 1), SgEdge(0, ("on",), 2)), 0)


def test_two_node_example():
    fg = build_factor_graph(chain(2), [PSI1, PSI2], [PSI_E])
    res = run_belief_propagation(fg)
    # joint scores 0.105, 0.045, 0.020, 0.080: P(node 0 = region 0) = 0.150 / 0.250
    np.testing.assert_allclose(res.referent_marginal, [0.6, 0.4], atol=1e-12)
    np.testing.assert_allclose(res.log_partition, np.log(0.25), atol=1e-12)


def test_single_variable():
    fg = build_factor_graph(chain(1), [[0.2, 0.8]], [])
    assert (fg.num_variables, fg.num_factors, len(fg.binary)) == (1, 1, 0)
    np.testing.assert_allclose(run_belief_propagation(fg).marginals, [[0.2, 0.8]], atol=1e-15)


@pytest.mark.parametrize("m", [2, 3, 6])
def test_chain_factor_counts(m):
    fg = build_factor_graph(chain(m), np.full((m, 3), 1 / 3), [np.full((3, 3), 1 / 9)] * (m - 1))
    assert fg.num_factors == m + m - 1


def test_two_edge_counts():
    fg = build_factor_graph(MAN_ON_SKIS, np.full((3, 2), 0.5), [np.full((2, 2), 0.25)] * 2)
    assert (fg.num_variables, len(fg.log_unary), len(fg.binary)) == (3, 3, 2)
    assert [(f.subject, f.object) for f in fg.binary] == [(0, 1), (0, 2)]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        build_factor_graph(chain(2), [PSI1], [PSI_E])
    with pytest.raises(ValueError):
        build_factor_graph(chain(2), [PSI1, PSI2], [])
    with pytest.raises(ValueError):
        build_factor_graph(chain(2), [PSI1, PSI2], [np.full((3, 3), 1 / 9)])
    with pytest.raises(ValueError):
        build_factor_graph(chain(2), [[1.0, 0.0], PSI2], [PSI_E])


def test_uniform_binary_passes_unary():
    rng = np.random.default_rng(0)
    unary = rng.dirichlet(np.ones(4), size=3)
    fg = build_factor_graph(MAN_ON_SKIS, unary, [np.full((4, 4), 1 / 16)] * 2)
    np.testing.assert_allclose(run_belief_propagation(fg).marginals, unary, atol=1e-13)


def test_context_evidence_collected():
    # region 0: man in red jacket, region 1: another man; jacket/skis are unambiguous
    unary = [[0.5, 0.5, 0.0 + 1e-9, 1e-9], [1e-9, 1e-9, 1.0, 1e-9], [1e-9, 1e-9, 1e-9, 1.0]]
    unary = np.array(unary) / np.sum(unary, axis=1, keepdims=True)
    rel = np.full((4, 4), 0.01)
    rel[0, 2] = rel[0, 3] = 1.0
    rel /= rel.sum()
    res = run_belief_propagation(build_factor_graph(MAN_ON_SKIS, unary, [rel, rel]))
    assert res.groundings == [0, 2, 3]
    assert res.referent_marginal[0] > 0.99


def test_nonfinite_potential_detected():
    fg = FactorGraph(2, [np.log(PSI1), np.array([np.nan, 0.0])],
                     [BinaryFactor(0, 1, np.log(PSI_E))], 0)
    with pytest.raises(NonFiniteMessageError):
        propagate(fg)


def test_cycle_rejected():
    t = np.log(np.full((2, 2), 0.25))
    fg = FactorGraph(2, [np.zeros(2)] * 3, [BinaryFactor(0, 1, t), BinaryFactor(1, 2, t), BinaryFactor(2, 0, t)], 0)
    with pytest.raises(ValueError, match="cycle"):
        propagate(fg)


def test_ground_tie_break():
    assert ground(GroundingResult(np.array([[0.1, 0.9], [0.5, 0.5]]), 0)) == [1, 0]


def test_grounding_json():
    res = run_belief_propagation(build_factor_graph(chain(2), [PSI1, PSI2], [PSI_E]))
    doc = json.loads(res.dumps())
    assert set(doc) == {"marginals", "groundings", "referent"}
    assert doc["groundings"] == ground(res) and doc["groundings"][0] == 0 and doc["referent"] == 0
    back = GroundingResult.from_dict(doc)
    np.testing.assert_array_equal(back.marginals, res.marginals)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(2, 5))
def test_matches_oracle_and_root_independent(seed, m, n):
    rng = np.random.default_rng(seed)
    fg = random_factor_graph(rng, m, n)
    exact = brute_force_marginals(fg)
    res = run_belief_propagation(fg)
    assert np.max(np.abs(res.marginals - exact)) < 1e-9
    assert np.max(np.abs(res.marginals.sum(axis=1) - 1)) < 1e-9
    for root in range(m):
        other = run_belief_propagation(fg, root=root).marginals
        assert np.max(np.abs(other - res.marginals)) < 1e-12
    _, change = sweep(fg, propagate(fg).messages)
    assert change <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(2, 5))
def test_evidence_flow_matches_conditional(seed, m, n):
    rng = np.random.default_rng(seed)
    fg = random_factor_graph(rng, m, n)
    neighbor = next(f.object if f.subject == fg.root else f.subject
                    for f in fg.binary if fg.root in (f.subject, f.object))
    state = int(rng.integers(n))
    clamped = list(fg.log_unary)
    with np.errstate(divide="ignore"):
        clamped[neighbor] = np.log(np.eye(n)[state])
    fg2 = FactorGraph(n, clamped, fg.binary, fg.root)
    expected = brute_force_conditional(fg, fg.root, {neighbor: state})
    assert np.max(np.abs(run_belief_propagation(fg2).referent_marginal - expected)) < 1e-9
