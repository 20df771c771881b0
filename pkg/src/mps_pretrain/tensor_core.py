"""Dense complex tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
C (row-major) order. Every reshape in the package relies on that ordering,
e.g. an MPS tensor with axes ``(left, phys, right)`` reshaped to a matrix
``(left * phys, right)`` has row index ``left_index * 2 + phys_index``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .constants import TOL


class ShapeError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


def as_tensor(a) -> np.ndarray:
    """Return ``a`` as a C-contiguous complex128 array."""
    return np.ascontiguousarray(a, dtype=np.complex128)


def contract(
    a: np.ndarray,
    b: np.ndarray,
    axes_a: Sequence[int],
    axes_b: Sequence[int],
) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the free axes of ``a`` followed by the free axes of
    ``b``, both in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = list(axes_a)
    axes_b = list(axes_b)
    if len(axes_a) != len(axes_b):
        raise ShapeError("axes_a and axes_b must have the same length")
    for ia, ib in zip(axes_a, axes_b):
        if a.shape[ia] != b.shape[ib]:
            raise ShapeError(
                f"dimension mismatch on paired axes {ia}/{ib}: {a.shape[ia]} != {b.shape[ib]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _require_matrix(m: np.ndarray, name: str = "m") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be a matrix, got shape {m.shape}")
    return m


def svd_truncated(
    m: np.ndarray,
    chi_max: int,
    cutoff: float = TOL.svd_cutoff,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD keeping at most ``chi_max`` singular values.

    Singular values below ``cutoff * max(S)`` are dropped, but at least one is
    always kept. Returns ``(U, S, V)`` with ``U @ diag(S) @ V`` approximating
    ``m``.
    """
    m = _require_matrix(m)
    if chi_max < 1:
        raise ValueError("chi_max must be positive")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust
        from scipy.linalg import svd

        u, s, vh = svd(m, full_matrices=False, lapack_driver="gesvd")
    keep = int(np.count_nonzero(s > cutoff * s[0])) if s.size and s[0] > 0 else 1
    keep = max(1, min(keep, chi_max))
    return u[:, :keep], s[:keep], vh[:keep, :]


def qr_decompose(m: np.ndarray, *, allow_wide: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR factorization ``m = Q @ R``.

    ``Q`` has orthonormal columns and ``R`` is upper triangular. Wide inputs
    (fewer rows than columns) are rejected unless ``allow_wide`` is set, in
    which case ``Q`` is square and ``R`` is upper trapezoidal.
    """
    m = _require_matrix(m)
    if m.shape[0] < m.shape[1] and not allow_wide:
        raise ShapeError(f"qr_decompose needs rows >= columns, got shape {m.shape}")
    q, r = np.linalg.qr(m, mode="reduced")
    return q, r


def check_hermitian(h: np.ndarray, atol: float = TOL.hermitian_atol) -> np.ndarray:
    h = _require_matrix(h, "h")
    if h.shape[0] != h.shape[1]:
        raise ShapeError(f"expected a square matrix, got {h.shape}")
    if not np.allclose(h, h.conj().T, atol=atol, rtol=0.0):
        raise NotHermitianError("matrix is not Hermitian within tolerance")
    return h


def hermitian_eig(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    h = check_hermitian(h)
    herm = 0.5 * (h + h.conj().T)
    return np.linalg.eigh(herm)


def hermitian_expm(h: np.ndarray, scale: complex) -> np.ndarray:
    """``exp(scale * h)`` for Hermitian ``h`` via its eigen-decomposition."""
    w, v = hermitian_eig(h)
    return (v * np.exp(scale * w)) @ v.conj().T


def is_isometry(v: np.ndarray, atol: float = TOL.isometry_atol) -> bool:
    v = _require_matrix(v, "v")
    gram = v.conj().T @ v
    return bool(np.allclose(gram, np.eye(v.shape[1]), atol=atol, rtol=0.0))


def is_unitary(u: np.ndarray, atol: float = TOL.unitary_atol) -> bool:
    u = _require_matrix(u, "u")
    return u.shape[0] == u.shape[1] and is_isometry(u, atol)
