from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mps_pretrain.mpsml import (
    ClassifierError,
    MPSClassifier,
    TrainingConfig,
    accuracy,
    bce_loss,
    decision_function,
    decision_via_overlap,
    feature_map,
    fit,
    merged_gradient,
    predict,
    train_sweep,
)
from mps_pretrain.mps import MPS, random_mps
from mps_pretrain.problems import LabeledDataset, product_teacher_dataset


def classifier(n=4, seed=0, **kw):
    return MPSClassifier.initialize(n, TrainingConfig(seed=seed, **kw))


def test_feature_map_is_unit_norm():
    phi = feature_map(np.linspace(-2, 2, 7))
    assert np.allclose(np.linalg.norm(phi, axis=-1), 1)
    with pytest.raises(ClassifierError):
        feature_map([np.inf])


@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_decision_matches_mps_overlap(n, seed):
    rng = np.random.default_rng(seed)
    c = MPSClassifier(random_mps(n, 2, rng))
    x = rng.uniform(0, np.pi / 2, (3, n))
    f = decision_function(c, x)
    assert np.allclose(f, [decision_via_overlap(c, row) for row in x], atol=1e-12)
    assert np.all((f >= 0) & (f <= 1 + 1e-12))


def test_predict_threshold():
    # bond-1 classifier equal to phi(0): f(x) = prod cos^2 x_i
    t = np.zeros((1, 2, 1))
    t[0, 0, 0] = 1.0
    c = MPSClassifier(MPS((t, t)))
    assert predict(c, [0.0, 0.0]) == 1
    assert predict(c, [np.pi / 2, 0.0]) == 0
    assert decision_function(c, [np.pi / 4, 0.0]) == pytest.approx(0.5)


def test_zero_learning_rate_sweep_preserves_decisions():
    data, _ = product_teacher_dataset(5, 40, seed=1)
    c = classifier(5, learning_rate=0.0)
    after = train_sweep(c, data)
    assert np.allclose(decision_function(after, data.samples), decision_function(c, data.samples), atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_merged_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    s = 7
    theta = rng.standard_normal((2, 2, 2, 2)) + 1j * rng.standard_normal((2, 2, 2, 2))
    left = rng.standard_normal((s, 2)) + 1j * rng.standard_normal((s, 2))
    right = rng.standard_normal((s, 2)) + 1j * rng.standard_normal((s, 2))
    phi_a = feature_map(rng.uniform(0, 1.5, s))
    phi_b = feature_map(rng.uniform(0, 1.5, s))
    y = rng.integers(0, 2, s).astype(float)
    _, g = merged_gradient(theta, left, right, phi_a, phi_b, y, 1e-9)

    def loss(t):
        return merged_gradient(t, left, right, phi_a, phi_b, y, 1e-9)[0]

    h = 1e-6
    fd = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = h
        re = (loss(theta + e) - loss(theta - e)) / (2 * h)
        im = (loss(theta + 1j * e) - loss(theta - 1j * e)) / (2 * h)
        fd[idx] = re + 1j * im
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-8)
    # scale invariance of the output makes the gradient orthogonal to theta
    assert abs(np.vdot(theta, g).real) < 1e-10


def test_small_step_sweep_lowers_loss():
    data, _ = product_teacher_dataset(4, 60, seed=2)
    c = classifier(4, learning_rate=0.01)
    assert bce_loss(train_sweep(c, data), data) < bce_loss(c, data)


def test_fit_learns_teacher_dataset():
    data, _ = product_teacher_dataset(4, 200, seed=0)
    seen = []
    c = fit(classifier(4, batch_size=20, epochs=5), data, callback=lambda e, m: seen.append(e))
    assert seen == [1, 2, 3, 4, 5]
    assert accuracy(c, data) >= 0.95
    bonds = [t.shape[2] for t in c.state.tensors[:-1]]
    assert max(bonds) <= 2


def test_training_is_deterministic():
    data, _ = product_teacher_dataset(4, 60, seed=4)
    cfg = dict(batch_size=10, epochs=2, learning_rate=0.05)
    a = fit(classifier(4, seed=9, **cfg), data)
    b = fit(classifier(4, seed=9, **cfg), data)
    assert all(np.array_equal(x, y) for x, y in zip(a.state.tensors, b.state.tensors))


def test_errors():
    with pytest.raises(ClassifierError):
        MPSClassifier.initialize(1)
    c = classifier(3)
    with pytest.raises(ClassifierError):
        decision_function(c, np.zeros(4))
    with pytest.raises(ClassifierError):
        train_sweep(c, LabeledDataset(np.zeros((2, 4)), np.array([0, 1])))
    with pytest.raises(ClassifierError):
        bce_loss(c, LabeledDataset(np.zeros((0, 3)), np.zeros(0, dtype=int)))
