from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mps_pretrain.tensor_core import (
    NotHermitianError,
    ShapeError,
    check_hermitian,
    contract,
    hermitian_eig,
    hermitian_expm,
    is_isometry,
    is_unitary,
    qr_decompose,
    svd_truncated,
)


def test_contract_matches_einsum(rng):
    a = rng.standard_normal((3, 4, 5))
    b = rng.standard_normal((5, 4, 2))
    out = contract(a, b, [1, 2], [1, 0])
    assert np.allclose(out, np.einsum("ijk,kjl->il", a, b))


def test_contract_rejects_mismatch(rng):
    with pytest.raises(ShapeError):
        contract(rng.standard_normal((2, 3)), rng.standard_normal((4, 2)), [1], [0])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_svd_truncated_reconstructs_when_untruncated(rows, cols, chi, seed):
    m = np.random.default_rng(seed).standard_normal((rows, cols))
    u, s, v = svd_truncated(m, chi, cutoff=0.0)
    k = min(rows, cols, chi)
    assert s.shape == (k,)
    assert np.all(np.diff(s) <= 1e-12)
    assert is_isometry(u) and is_isometry(v.conj().T)
    if chi >= min(rows, cols):
        assert np.allclose(u @ np.diag(s) @ v, m, atol=1e-10)


def test_svd_truncated_error_is_discarded_weight(rng):
    m = rng.standard_normal((6, 6))
    full = np.linalg.svd(m, compute_uv=False)
    u, s, v = svd_truncated(m, 3, cutoff=0.0)
    err = np.linalg.norm(m - u @ np.diag(s) @ v)
    assert np.isclose(err, np.sqrt(np.sum(full[3:] ** 2)))


def test_svd_cutoff_keeps_at_least_one():
    u, s, v = svd_truncated(np.zeros((3, 3)), 2)
    assert s.shape == (1,)


def test_qr_shapes_and_wide_rejection(rng):
    q, r = qr_decompose(rng.standard_normal((5, 3)))
    assert q.shape == (5, 3) and np.allclose(np.tril(r, -1), 0)
    with pytest.raises(ShapeError):
        qr_decompose(rng.standard_normal((2, 3)))
    q, r = qr_decompose(rng.standard_normal((2, 3)), allow_wide=True)
    assert q.shape == (2, 2)


def test_hermitian_checks(rng):
    a = rng.standard_normal((4, 4))
    with pytest.raises(NotHermitianError):
        check_hermitian(a + 1j * a)
    h = a + a.T
    w, v = hermitian_eig(h)
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(v @ np.diag(w) @ v.conj().T, h)


def test_hermitian_expm_against_scipy(rng):
    from scipy.linalg import expm

    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h = a + a.conj().T
    assert np.allclose(hermitian_expm(h, -0.3j), expm(-0.3j * h))
    assert is_unitary(hermitian_expm(h, -0.3j))
    assert not is_unitary(hermitian_expm(h, -0.3))
