import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jvgn.checks import random_factor_graph
from jvgn.inference import BinaryFactor, FactorGraph
from jvgn.oracle import (EnumerationCapExceeded, brute_force_marginals, joint_probability, joint_table,
                         joint_table_loop)

TWO_NODE = FactorGraph(2, [np.log([0.6, 0.4]), np.log([0.5, 0.5])],
                       [BinaryFactor(0, 1, np.log([[0.35, 0.15], [0.10, 0.40]]))], 0)


def test_two_node_scores():
    scores = [joint_probability(TWO_NODE, a) for a in [(0, 0), (0, 1), (1, 0), (1, 1)]]
    np.testing.assert_allclose(scores, [0.105, 0.045, 0.020, 0.080], rtol=1e-12)
    np.testing.assert_allclose(brute_force_marginals(TWO_NODE)[0], [0.6, 0.4], rtol=1e-12)
    assert math.isclose(joint_table(TWO_NODE).partition, 0.25, rel_tol=1e-12)


def test_single_node():
    fg = FactorGraph(2, [np.log([0.2, 0.8])], [], 0)
    assert math.isclose(joint_probability(fg, (1,)), 0.8)
    np.testing.assert_allclose(brute_force_marginals(fg), [[0.2, 0.8]])


def test_uniform_scores_identical():
    t = np.log(np.full((3, 3), 1 / 9))
    fg = FactorGraph(3, [np.log(np.full(3, 1 / 3))] * 3, [BinaryFactor(0, 1, t), BinaryFactor(2, 0, t)], 0)
    scores = joint_table(fg).scores
    assert np.allclose(scores, scores.flat[0], rtol=1e-14)


def test_out_of_range():
    with pytest.raises(IndexError):
        joint_probability(TWO_NODE, (0, 2))
    with pytest.raises(ValueError):
        joint_probability(TWO_NODE, (0,))


def test_cap():
    fg = FactorGraph(10, [np.zeros(10)] * 4, [], 0)
    with pytest.raises(EnumerationCapExceeded):
        brute_force_marginals(fg, cap=9999)
    assert brute_force_marginals(fg, cap=10_000).shape == (4, 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(2, 4))
def test_vectorized_matches_loop(seed, m, n):
    fg = random_factor_graph(np.random.default_rng(seed), m, n)
    a, b = joint_table(fg), joint_table_loop(fg)
    np.testing.assert_allclose(a.scores, b.scores, rtol=1e-13)
    marg = brute_force_marginals(fg)
    assert np.all(marg >= 0) and np.allclose(marg.sum(axis=1), 1, atol=1e-12)
