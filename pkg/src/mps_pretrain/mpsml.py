"""Supervised training of an MPS binary classifier by two-site gradient sweeps.

Each feature ``x_i`` is lifted to ``phi(x_i) = (cos x_i, sin x_i)`` and the
classifier output is ``f(x) = |<psi|phi(x)>|^2``. Training sweeps the chain
left to right and back; at every bond the two site tensors are merged, moved
one gradient step on the binary cross-entropy, split by a truncated SVD and
renormalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .circuit import bce, bce_grad
from .mps import MPS, canonicalize, overlap, product_state
from .problems import LabeledDataset
from .tensor_core import svd_truncated


class ClassifierError(ValueError):
    pass


def feature_map(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ClassifierError("features must be finite")
    return np.stack([np.cos(x), np.sin(x)], axis=-1)


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    epochs: int = 5
    batch_size: int | None = None  # None means full batch
    seed: int = 0
    chi_max: int = 2
    epsilon: float = 1e-7
    init_noise: float = 1e-2


@dataclass(frozen=True)
class MPSClassifier:
    state: MPS
    config: TrainingConfig = TrainingConfig()

    @property
    def n(self) -> int:
        return self.state.n

    @classmethod
    def initialize(cls, n: int, config: TrainingConfig = TrainingConfig()) -> "MPSClassifier":
        """Near-product start: every site in ``(cos pi/4, sin pi/4)`` plus seeded noise."""
        if n < 2:
            raise ClassifierError("the classifier needs at least two features")
        rng = np.random.default_rng(config.seed)
        dims = [1] + [min(config.chi_max, 2 ** (k + 1), 2 ** (n - k - 1)) for k in range(n - 1)] + [1]
        tensors = []
        for k in range(n):
            t = config.init_noise * rng.standard_normal((dims[k], 2, dims[k + 1]))
            t[0, :, 0] += math.sqrt(0.5)
            tensors.append(t)
        return cls(canonicalize(MPS(tuple(tensors)), "right"), config)


def decision_function(c: MPSClassifier, x) -> np.ndarray | float:
    """``|<psi|phi(x)>|^2`` for one feature vector or a sample matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != c.n:
        raise ClassifierError(f"expected {c.n} features, got {x.shape[1]}")
    amp = _amplitudes(c.state.tensors, feature_map(x))
    f = np.abs(amp) ** 2
    return float(f[0]) if single else f


def _amplitudes(tensors, phis: np.ndarray) -> np.ndarray:
    """``<phi(x)|psi>`` for every sample (features are real, so this is ``conj(<psi|phi>)``)."""
    env = np.ones((phis.shape[0], 1), dtype=complex)
    for k, t in enumerate(tensors):
        env = np.einsum("sl,lpr,sp->sr", env, t, phis[:, k, :])
    return env[:, 0]


def predict(c: MPSClassifier, x) -> np.ndarray | int:
    """Label 0 when ``f < 0.5``, otherwise 1."""
    f = decision_function(c, x)
    if np.ndim(f) == 0:
        return int(f >= 0.5)
    return (np.asarray(f) >= 0.5).astype(int)


def bce_loss(c: MPSClassifier, data: LabeledDataset, epsilon: float | None = None) -> float:
    if len(data) == 0:
        raise ClassifierError("empty dataset")
    eps = c.config.epsilon if epsilon is None else epsilon
    return bce(decision_function(c, data.samples), data.labels.astype(float), eps)


def accuracy(c: MPSClassifier, data: LabeledDataset) -> float:
    return float(np.mean(predict(c, data.samples) == data.labels))


def merged_gradient(theta, left, right, phi_a, phi_b, labels, epsilon):
    """Loss and Wirtinger gradient for a merged two-site tensor.

    ``theta`` has axes ``(l, s, t, r)``; ``left``/``right`` are per-sample
    environment vectors and ``phi_a``/``phi_b`` the feature vectors of the
    two sites. The output ``f = |c|^2 / ||theta||^2`` is scale invariant, so
    the gradient is orthogonal to ``theta``. Returns ``(loss, G)`` with
    ``G = dL/dRe(theta) + i dL/dIm(theta)``.
    """
    norm2 = float(np.vdot(theta, theta).real)
    # T_s[l, s, t, r] = left[l] phi_a[s] phi_b[t] right[r]
    c = np.einsum("xl,xs,xt,xr,lstr->x", left, phi_a, phi_b, right, theta)
    f = np.abs(c) ** 2 / norm2
    loss = bce(f, labels, epsilon)
    w = bce_grad(f, labels, epsilon)
    # d f / d conj(theta) = (c * conj(T) - f * theta) / norm2
    g = np.einsum("x,xl,xs,xt,xr->lstr", w * c, left.conj(), phi_a, phi_b, right.conj())
    g = (g - np.sum(w * f) * theta) / norm2
    return loss, 2.0 * g


def _right_envs(tensors, phis):
    n = len(tensors)
    envs = [None] * (n + 1)
    envs[n] = np.ones((phis.shape[0], 1), dtype=complex)
    for k in range(n - 1, -1, -1):
        envs[k] = np.einsum("lpr,sp,sr->sl", tensors[k], phis[:, k, :], envs[k + 1])
    return envs


def _left_step(env, t, phi):
    return np.einsum("sl,lpr,sp->sr", env, t, phi)


def train_sweep(c: MPSClassifier, data: LabeledDataset) -> MPSClassifier:
    """One left-to-right-to-left sweep of two-site gradient updates on ``data``."""
    if c.n < 2:
        raise ClassifierError("training needs at least two sites")
    if data.n_features != c.n:
        raise ClassifierError("dataset feature count does not match the classifier")
    cfg = c.config
    lr = cfg.learning_rate
    labels = data.labels.astype(float)
    phis = feature_map(data.samples)
    # start right-canonical so the centre is at site 0
    ts = list(canonicalize(c.state, "right").tensors) if c.state.canonical_form != "right" else list(c.state.tensors)
    n = len(ts)
    renv = _right_envs(ts, phis)
    lenv = [None] * (n + 1)
    lenv[0] = np.ones((phis.shape[0], 1), dtype=complex)

    def update(i):
        theta = np.tensordot(ts[i], ts[i + 1], axes=(2, 0))
        if lr != 0.0:
            _, g = merged_gradient(theta, lenv[i], renv[i + 2], phis[:, i, :], phis[:, i + 1, :], labels, cfg.epsilon)
            theta = theta - lr * g
        l, _, _, r = theta.shape
        u, s, v = svd_truncated(theta.reshape(l * 2, 2 * r), cfg.chi_max)
        s = s / np.linalg.norm(s)
        return u.reshape(l, 2, -1), s, v.reshape(-1, 2, r)

    for i in range(n - 1):
        u, s, v = update(i)
        ts[i] = u
        ts[i + 1] = s[:, None, None] * v
        lenv[i + 1] = _left_step(lenv[i], ts[i], phis[:, i, :])
    for i in range(n - 2, -1, -1):
        u, s, v = update(i)
        ts[i] = u * s[None, None, :]
        ts[i + 1] = v
        renv[i + 1] = np.einsum("lpr,sp,sr->sl", ts[i + 1], phis[:, i + 1, :], renv[i + 2])
    return replace(c, state=MPS(tuple(ts), "right"))


def fit(c: MPSClassifier, data: LabeledDataset, epochs: int | None = None, callback=None) -> MPSClassifier:
    """Train for ``epochs`` passes; each mini-batch gets one sweep.

    Batches are drawn from a seeded permutation per epoch. ``callback``, if
    given, is called as ``callback(epoch, classifier)`` after every epoch.
    """
    cfg = c.config
    epochs = cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng(cfg.seed + 1)
    size = len(data) if cfg.batch_size is None else cfg.batch_size
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(data)) if size < len(data) else np.arange(len(data))
        for start in range(0, len(data), size):
            idx = order[start:start + size]
            c = train_sweep(c, LabeledDataset(data.samples[idx], data.labels[idx]))
        if callback is not None:
            callback(epoch, c)
    return c


def encoded_state(x) -> MPS:
    """Product MPS of the feature map, ``(x) (cos x_i, sin x_i)``."""
    x = np.asarray(x, dtype=float)
    return product_state(x.size, x)


def decision_via_overlap(c: MPSClassifier, x) -> float:
    """Reference decision value through a full MPS overlap (slower, used as a cross-check)."""
    return float(abs(overlap(c.state, encoded_state(x))) ** 2)
