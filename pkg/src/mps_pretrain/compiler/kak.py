"""Two-qubit KAK decomposition with Weyl-chamber canonical interaction angles.

A 4x4 unitary is written as

    U = e^{i phase} (L0 (x) L1) exp(-i (kx XX + ky YY + kz ZZ)) (R0 (x) R1)

with ``pi/4 >= kx >= ky >= |kz|`` (and ``kz >= 0`` when ``kx = pi/4``). Every
single-qubit factor is stored as Z-Y-Z Euler angles ``(a1, a2, a3)`` in
application order, i.e. the matrix ``Rz(a3) Ry(a2) Rz(a1)`` up to phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..constants import TOL
from ..pauli import PAULI_MATRICES
from ..tensor_core import is_unitary

_X = PAULI_MATRICES["X"]
_Y = PAULI_MATRICES["Y"]
_Z = PAULI_MATRICES["Z"]
_I2 = np.eye(2, dtype=complex)
_SIGMAS = (_X, _Y, _Z)
_XX = np.kron(_X, _X)
_YY = np.kron(_Y, _Y)
_ZZ = np.kron(_Z, _Z)

# columns are the magic (phase-adjusted Bell) basis states
MAGIC = np.array(
    [[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]], dtype=complex
) / math.sqrt(2)

# XX, YY, ZZ are diagonal in the magic basis with these +-1 entries
_MAGIC_SIGNS = np.array(
    [np.real(np.diag(MAGIC.conj().T @ p @ MAGIC)) for p in (_XX, _YY, _ZZ)]
)

# Hermitian single-qubit unitaries exchanging two Pauli axes
_AXIS_SWAPS = {
    (0, 1): (_X + _Y) / math.sqrt(2),
    (0, 2): (_X + _Z) / math.sqrt(2),
    (1, 2): (_Y + _Z) / math.sqrt(2),
}


class KAKError(ValueError):
    pass


def rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def ry(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def zyz_matrix(angles) -> np.ndarray:
    a1, a2, a3 = angles
    return rz(a3) @ ry(a2) @ rz(a1)


def zyz_angles(u: np.ndarray) -> tuple[float, float, float]:
    """Euler angles ``(a1, a2, a3)`` with ``u ~ Rz(a3) Ry(a2) Rz(a1)`` up to phase."""
    u = np.asarray(u, dtype=complex)
    v = u / np.sqrt(np.linalg.det(u))
    a, b = v[0, 0], v[1, 0]
    theta = 2.0 * math.atan2(abs(b), abs(a))
    if abs(a) < 1e-14:
        plus, minus = 0.0, 2.0 * np.angle(b)
    elif abs(b) < 1e-14:
        plus, minus = -2.0 * np.angle(a), 0.0
    else:
        plus, minus = -2.0 * np.angle(a), 2.0 * np.angle(b)
    a3 = 0.5 * (plus + minus)
    a1 = 0.5 * (plus - minus)
    return float(a1), float(theta), float(a3)


def interaction_matrix(k) -> np.ndarray:
    """``exp(-i (kx XX + ky YY + kz ZZ))``, diagonal in the magic basis."""
    phases = np.exp(-1j * (np.asarray(k, dtype=float) @ _MAGIC_SIGNS))
    return MAGIC @ np.diag(phases) @ MAGIC.conj().T


@dataclass(frozen=True)
class KAKAngles:
    pre_left: tuple[float, float, float]
    pre_right: tuple[float, float, float]
    post_left: tuple[float, float, float]
    post_right: tuple[float, float, float]
    interaction: tuple[float, float, float]
    global_phase: float = 0.0

    def rotation_angles(self) -> list[float]:
        """The 15 circuit angles: pre rz/ry/rz on each qubit, xx/yy/zz, post rz/ry/rz.

        Circuit interaction gates use ``exp(-i theta PP / 2)``, so each
        interaction angle is twice the corresponding coefficient.
        """
        kx, ky, kz = self.interaction
        return [
            *self.pre_left, *self.pre_right,
            2.0 * kx, 2.0 * ky, 2.0 * kz,
            *self.post_left, *self.post_right,
        ]

    @classmethod
    def identity(cls) -> "KAKAngles":
        z = (0.0, 0.0, 0.0)
        return cls(z, z, z, z, z, 0.0)


def kak_reconstruct(a: KAKAngles) -> np.ndarray:
    pre = np.kron(zyz_matrix(a.pre_left), zyz_matrix(a.pre_right))
    post = np.kron(zyz_matrix(a.post_left), zyz_matrix(a.post_right))
    return np.exp(1j * a.global_phase) * post @ interaction_matrix(a.interaction) @ pre


def _split_product(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor a 4x4 matrix ``A (x) B`` into its 2x2 factors via a rank-1 SVD."""
    r = k.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    u, s, vh = np.linalg.svd(r)
    a = math.sqrt(s[0]) * u[:, 0].reshape(2, 2)
    b = math.sqrt(s[0]) * vh[0].reshape(2, 2)
    return a, b


def _orthogonal_diagonalizer(m: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Real orthogonal ``P`` (det +1) diagonalizing the complex symmetric unitary ``m``.

    Real and imaginary parts of ``m`` are commuting real symmetric matrices, so
    a generic real combination of them has the common eigenbasis.
    """
    for _ in range(20):
        c = rng.normal(size=2)
        _, p = np.linalg.eigh(c[0] * m.real + c[1] * m.imag)
        d = p.T @ m @ p
        if np.max(np.abs(d - np.diag(np.diag(d)))) < 1e-11:
            if np.linalg.det(p) < 0:
                p[:, 0] = -p[:, 0]
            return p
    raise KAKError("failed to diagonalize the magic-basis Gram matrix")


class _Factors:
    """Mutable bookkeeping of ``(L0 (x) L1) N(k) (R0 (x) R1)`` during canonicalization."""

    def __init__(self, l0, l1, k, r0, r1):
        self.l0, self.l1, self.r0, self.r1 = l0, l1, r0, r1
        self.k = np.array(k, dtype=float)

    def shift(self, j: int, sign: int) -> None:
        # N(k) = N(k + s pi/2 e_j) (i s sigma_j sigma_j) up to phase
        self.k[j] += sign * math.pi / 2
        self.r0 = _SIGMAS[j] @ self.r0
        self.r1 = _SIGMAS[j] @ self.r1

    def negate_except(self, m: int) -> None:
        # conjugating by sigma_m on qubit 0 flips the two other coefficients
        for j in range(3):
            if j != m:
                self.k[j] = -self.k[j]
        self.l0 = self.l0 @ _SIGMAS[m]
        self.r0 = _SIGMAS[m] @ self.r0

    def swap(self, i: int, j: int) -> None:
        s = _AXIS_SWAPS[(min(i, j), max(i, j))]
        self.k[i], self.k[j] = self.k[j], self.k[i]
        self.l0 = self.l0 @ s
        self.l1 = self.l1 @ s
        self.r0 = s @ self.r0
        self.r1 = s @ self.r1


def _canonicalize(f: _Factors, atol: float = 1e-12) -> None:
    quarter = math.pi / 4
    for j in range(3):
        while f.k[j] > quarter + atol:
            f.shift(j, -1)
        while f.k[j] <= -quarter + atol:
            f.shift(j, +1)
    # order by magnitude (selection sort with axis swaps)
    for i in range(3):
        best = max(range(i, 3), key=lambda j: abs(f.k[j]))
        if best != i and abs(f.k[best]) > abs(f.k[i]) + atol:
            f.swap(i, best)
    if f.k[0] < 0:
        f.negate_except(1)
    if f.k[1] < 0:
        f.negate_except(0)
    if f.k[2] < 0 and abs(f.k[0] - quarter) <= 1e-9:
        # at the chamber wall kx = pi/4: (pi/4, ky, kz) ~ (-pi/4, ky, kz) ~ (pi/4, ky, -kz)
        f.shift(0, -1)
        f.negate_except(1)


def kak_decompose(u: np.ndarray, *, atol: float = TOL.unitary_atol, seed: int = 0) -> KAKAngles:
    """Decompose a 4x4 unitary (qubit order: row index ``2*q0 + q1``)."""
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4):
        raise KAKError(f"expected a 4x4 matrix, got {u.shape}")
    if not is_unitary(u, atol):
        raise KAKError("input is not unitary")
    rng = np.random.default_rng(seed)
    su = u / np.linalg.det(u) ** 0.25
    um = MAGIC.conj().T @ su @ MAGIC
    p = _orthogonal_diagonalizer(um.T @ um, rng)
    d2 = np.diag(p.T @ um.T @ um @ p)
    d = np.sqrt(d2)
    if np.real(np.prod(d)) < 0:
        d[0] = -d[0]
    o1 = um @ p @ np.diag(1.0 / d)
    o1 = o1.real
    if np.linalg.det(o1) < 0:
        # det(o1) = det(um) / prod(d) = +1 in exact arithmetic
        raise KAKError("orthogonal factor has the wrong orientation")
    # su = (M o1 M^dag)(M d M^dag)(M p^T M^dag)
    post = MAGIC @ o1 @ MAGIC.conj().T
    pre = MAGIC @ p.T @ MAGIC.conj().T
    # d = exp(-i (k . signs) + i phi): solve the 4x4 linear system in angle space
    theta = np.angle(d)
    system = np.vstack([-_MAGIC_SIGNS, np.ones(4)]).T  # columns kx, ky, kz, phi
    sol = np.linalg.solve(system, theta)
    l0, l1 = _split_product(post)
    r0, r1 = _split_product(pre)
    f = _Factors(l0, l1, sol[:3], r0, r1)
    _canonicalize(f)
    partial = KAKAngles(
        pre_left=zyz_angles(f.r0),
        pre_right=zyz_angles(f.r1),
        post_left=zyz_angles(f.l0),
        post_right=zyz_angles(f.l1),
        interaction=tuple(float(x) for x in f.k),
        global_phase=0.0,
    )
    recon = kak_reconstruct(partial)
    phase = float(np.angle(np.trace(recon.conj().T @ u)))
    out = KAKAngles(
        partial.pre_left, partial.pre_right, partial.post_left, partial.post_right,
        partial.interaction, phase,
    )
    err = np.linalg.norm(u - kak_reconstruct(out), 2)
    if err > 1e-8:
        if seed < 5:
            return kak_decompose(u, atol=atol, seed=seed + 1)
        raise KAKError(f"reconstruction error {err:.3e} exceeds tolerance")
    return out


def in_weyl_chamber(k, atol: float = 1e-9) -> bool:
    kx, ky, kz = k
    quarter = math.pi / 4
    ok = quarter + atol >= kx >= ky - atol and ky + atol >= abs(kz)
    if ok and abs(kx - quarter) <= atol:
        ok = kz >= -atol
    return bool(ok)
