import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jvgn.checks import random_example, random_params
from jvgn.inference import GroundingResult
from jvgn.potentials import Region, Scene
from jvgn.training import (DET, GT, Adam, SoftLabel, TrainConfig, example_loss, finite_difference_gradient, fit,
                           gradients, iou, loss, loss_and_grads, make_soft_labels,
                           relative_error)


def scene_of(boxes, w=10.0, h=10.0):
    return Scene(w, h, tuple(Region(b, np.zeros(3)) for b in boxes))


def test_iou():
    assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0
    assert iou((0, 0, 1, 1), (2, 2, 3, 3)) == 0.0
    assert iou((0, 0, 1, 1), (1, 0, 2, 1)) == 0.0
    assert math.isclose(iou((0, 0, 2, 2), (1, 0, 3, 2)), 2 / 6, rel_tol=1e-15)
    with pytest.raises(ValueError):
        iou((0, 0, 0, 2), (0, 0, 1, 1))


def test_soft_labels():
    s = scene_of([(0, 0, 2, 2), (5, 5, 7, 7), (8, 8, 9, 9)])
    assert np.array_equal(make_soft_labels(s, (3, 3, 4, 4)).probs, np.full(3, 1 / 3))
    p = make_soft_labels(s, (0, 0, 2, 2)).probs
    e = math.exp(0.5)
    np.testing.assert_allclose(p, [e / (e + 2), 1 / (e + 2), 1 / (e + 2)], rtol=1e-15)
    assert np.array_equal(make_soft_labels(scene_of([(1, 1, 2, 2)]), (0, 0, 5, 5)).probs, [1.0])


def test_losses():
    uniform = GroundingResult(np.full((1, 4), 0.25), 0)
    assert math.isclose(loss(uniform, 2, GT), math.log(4), rel_tol=1e-15)
    onehot = GroundingResult(np.array([[0.0, 1.0, 0.0]]), 0)
    assert loss(onehot, 1, GT) == 0.0
    p = np.array([0.2, 0.5, 0.3])
    assert abs(loss(GroundingResult(p[None], 0), SoftLabel(p), DET)) < 1e-16
    with pytest.raises(AssertionError):
        loss(onehot, 0, GT)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6), st.integers(0, 1000))
def test_det_loss_nonnegative(weights, seed):
    q = np.array(weights) / np.sum(weights)
    p = np.random.default_rng(seed).dirichlet(np.ones(q.size))
    value = loss(GroundingResult(q[None], 0), SoftLabel(p), DET)
    assert value >= -1e-15
    # divided by N as in the displayed loss
    assert math.isclose(value * q.size, float(np.sum(p * np.log(p / q))), rel_tol=1e-9, abs_tol=1e-15)


@pytest.mark.parametrize("setting,marginalize", [(GT, True), (DET, True), (GT, False)])
def test_gradients_match_finite_differences(setting, marginalize):
    rng = np.random.default_rng(5)
    for _ in range(3):
        ex = random_example(rng, setting)
        params = random_params(rng)
        a = gradients(ex, params, marginalize)
        n = finite_difference_gradient(lambda p: example_loss(ex, p, marginalize), params)
        assert relative_error(a, n).max() < 1e-4


def test_zero_loss_gradient():
    # a one-region scene makes every marginal exactly one-hot
    rng = np.random.default_rng(2)
    ex = random_example(rng)
    ex.scene = Scene(100.0, 100.0, ex.scene.regions[:1])
    ex.referent_region = 0
    ex.context_regions = [0] * ex.graph.num_nodes
    params = random_params(rng)
    assert example_loss(ex, params) == 0.0
    a = gradients(ex, params)
    n = finite_difference_gradient(lambda p: example_loss(ex, p), params)
    assert np.max(np.abs(a - n)) < 1e-10


def test_dead_path_gradient_is_zero():
    rng = np.random.default_rng(4)
    ex = random_example(rng)
    params = random_params(rng)
    g = gradients(ex, params)
    # "spare" never appears in generated expressions
    offset = params.flat_names().index("embedding[0, 0]")
    d = params.dims.d_emb
    start = offset + params.vocab.lookup("spare") * d
    assert np.all(g[start:start + d] == 0.0)


def test_duplicate_example_doubles_gradient():
    rng = np.random.default_rng(8)
    ex = random_example(rng)
    params = random_params(rng)
    single = fit([ex], TrainConfig(lr=0.0, epochs=1), params)
    _, g1, _ = loss_and_grads(ex, params)
    _, g2, _ = loss_and_grads(ex, params)
    for k in g1:
        assert np.array_equal(g1[k] + g2[k], 2 * g1[k])
    assert single.history[0].loss == example_loss(ex, params)


def test_adam_first_step():
    rng = np.random.default_rng(0)
    params = random_params(rng)
    grads = {k: rng.normal(size=v.shape) for k, v in params.arrays.items()}
    before = {k: v.copy() for k, v in params.arrays.items()}
    Adam(params).step(params, grads, lr=0.01)
    for k in grads:
        # bias-corrected first step is lr * sign(g) up to eps
        np.testing.assert_allclose(before[k] - params.arrays[k],
                                   0.01 * grads[k] / (np.abs(grads[k]) + 1e-8), rtol=1e-9)


def test_config_validation_and_decay():
    c = TrainConfig(lr=1e-3)
    assert c.lr_at(0) == 1e-3 and c.lr_at(9) == 1e-3
    assert math.isclose(c.lr_at(10), 9e-4) and math.isclose(c.lr_at(25), 1e-3 * 0.81)
    for bad in (dict(lr=-1), dict(decay=0), dict(decay=1.5), dict(batch_size=0), dict(setting="x")):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def small_dataset(seed=0, n=6, setting=GT):
    rng = np.random.default_rng(seed)
    return [random_example(rng, setting) for _ in range(n)], random_params(rng, scale=0.1)


def test_fit_lr_zero_unchanged():
    data, params = small_dataset()
    res = fit(data, TrainConfig(lr=0.0, epochs=2, batch_size=4), params)
    assert np.array_equal(res.params.flat(), params.flat())


def test_fit_deterministic_and_input_untouched():
    data, params = small_dataset(1)
    before = params.flat().copy()
    a = fit(data, TrainConfig(lr=0.01, epochs=3, batch_size=4, seed=3), params)
    b = fit(data, TrainConfig(lr=0.01, epochs=3, batch_size=4, seed=3), params)
    assert [m.loss for m in a.history] == [m.loss for m in b.history]
    assert np.array_equal(a.params.flat(), b.params.flat())
    assert np.array_equal(params.flat(), before)


def test_fit_overfits_single_example():
    data, params = small_dataset(2, n=1)
    res = fit(data, TrainConfig(lr=0.05, epochs=200, batch_size=1), params)
    losses = [m.loss for m in res.history]
    assert losses[-1] < 0.02 * losses[0] + 1e-3
    tail = losses[20:]
    assert all(b <= a + 1e-9 for a, b in zip(tail, tail[1:]))


def test_fit_det_setting_runs():
    data, params = small_dataset(3, setting=DET)
    res = fit(data, TrainConfig(lr=0.01, epochs=2, batch_size=3, setting=DET), params)
    assert all(m.loss >= 0 for m in res.history)


def test_fit_freeze_embeddings():
    data, params = small_dataset(4)
    res = fit(data, TrainConfig(lr=0.01, epochs=1, batch_size=4, freeze_embeddings=True), params)
    assert np.array_equal(res.params["embedding"], params["embedding"])
    assert not np.array_equal(res.params["un_w1"], params["un_w1"])


def test_fit_empty_dataset():
    _, params = small_dataset()
    with pytest.raises(ValueError):
        fit([], TrainConfig(), params)
