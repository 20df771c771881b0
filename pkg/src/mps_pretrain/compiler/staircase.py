"""Exact compilation of canonical MPS into staircases of unitary gates.

For a left-canonical MPS each site tensor reshaped to ``(left*2, right)`` is
an isometry from the right bond to (left bond, physical). With bond
dimension 2 every bond fits on one qubit, and site ``k`` becomes a 4x4
unitary on qubits ``(k-1, k)`` mapping ``|0>|a_k> -> sum |a_{k-1}>|s_k>``.
Applying the gates for sites ``n-1, ..., 1`` and then a single-qubit gate
for site 0 prepares the MPS from ``|0...0>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..circuit import Circuit, Gate, run, zero_state
from ..constants import TOL
from ..mps import MPS, canonicalize, to_dense
from .kak import KAKAngles, kak_decompose, zyz_angles


class CompileError(ValueError):
    pass


class BondTooLargeError(CompileError):
    pass


def embed_isometry(v: np.ndarray, atol: float = TOL.isometry_atol) -> np.ndarray:
    """Complete an isometry to a square unitary whose first columns equal ``v``.

    The extra columns come from Gram-Schmidt over the canonical basis vectors
    in index order, skipping those (nearly) inside the current span, so the
    result is deterministic.
    """
    v = np.asarray(v, dtype=complex)
    if v.ndim == 1:
        v = v[:, None]
    rows, cols = v.shape
    if cols > rows:
        raise CompileError("an isometry cannot have more columns than rows")
    if not np.allclose(v.conj().T @ v, np.eye(cols), atol=atol, rtol=0):
        raise CompileError("input is not an isometry")
    basis = [v[:, j] for j in range(cols)]
    for j in range(rows):
        if len(basis) == rows:
            break
        w = np.zeros(rows, dtype=complex)
        w[j] = 1.0
        for _ in range(2):
            for b in basis:
                w = w - np.vdot(b, w) * b
        nrm = np.linalg.norm(w)
        if nrm > 1e-6:
            basis.append(w / nrm)
    u = np.stack(basis, axis=1)
    u[:, :cols] = v
    return u


@dataclass(frozen=True)
class StaircaseGate:
    pair: int  # acts on qubits (pair, pair + 1)
    unitary: np.ndarray
    angles: KAKAngles


@dataclass(frozen=True)
class PlacedGate:
    """A two-qubit unitary on ``(pair, pair+1)`` assigned to a brick-wall layer."""

    layer: int
    pair: int
    unitary: np.ndarray


@dataclass(frozen=True)
class CompiledStaircase:
    """Gates preparing an MPS from ``|0...0>``, or their adjoint.

    ``gates`` are listed in preparation order (pair ``n-2`` first, pair 0
    last), followed in time by ``boundary`` on qubit 0. When ``adjoint`` is
    set the circuit represented is the inverse: boundary dagger first, then
    the daggered pair gates in reverse order, so that the probability of
    reading all zeros on input ``|phi>`` equals ``|<psi|phi>|^2``.
    """

    n: int
    gates: tuple[StaircaseGate, ...]
    boundary: np.ndarray
    boundary_angles: tuple[float, float, float]
    adjoint: bool = False

    def as_adjoint(self, adjoint: bool = True) -> "CompiledStaircase":
        return CompiledStaircase(self.n, self.gates, self.boundary, self.boundary_angles, adjoint)

    def circuit(self) -> Circuit:
        """Fixed-unitary circuit in application order."""
        seq = [Gate("fixed-unitary", (g.pair, g.pair + 1), matrix=g.unitary) for g in self.gates]
        seq.append(Gate("fixed-unitary", (0,), matrix=self.boundary))
        if self.adjoint:
            seq = [Gate("fixed-unitary", g.qubits, matrix=g.matrix.conj().T) for g in reversed(seq)]
        return Circuit(self.n, tuple(seq))

    def placed_gates(self) -> list[PlacedGate]:
        """Two-qubit gates with the boundary gate merged into pair 0, laid out by layer.

        Preparation order puts pair ``i`` at layer ``n-2-i``; the adjoint
        reverses time, putting daggered pair ``i`` at layer ``i``.
        """
        if self.n < 2:
            raise CompileError("brick-wall placement needs at least two qubits")
        placed = []
        for g in self.gates:
            u = g.unitary
            if g.pair == 0:
                u = np.kron(self.boundary, np.eye(2)) @ u
            placed.append(PlacedGate(self.n - 2 - g.pair, g.pair, u))
        return adjoint_layout(placed, self.n) if self.adjoint else placed


def adjoint_layout(placed: list[PlacedGate], n: int) -> list[PlacedGate]:
    """Time-reverse a preparation layout spanning layers ``0 .. n-2``."""
    last = n - 2
    return [PlacedGate(last - p.layer, p.pair, p.unitary.conj().T) for p in placed]


def _left_canonical(s: MPS) -> MPS:
    if s.canonical_form == "none":
        raise CompileError("MPS must be in left- or right-canonical form before compiling")
    return s if s.canonical_form == "left" else canonicalize(s, "left")


def _padded_isometry(t: np.ndarray, left_dim: int) -> np.ndarray:
    """Reshape ``(l, 2, r)`` to ``(left_dim*2, r)`` with zero rows for missing bond states."""
    l, d, r = t.shape
    v = np.zeros((left_dim, d, r), dtype=complex)
    v[:l] = t
    return v.reshape(left_dim * d, r)


def mps_to_staircase(s: MPS, *, adjoint: bool = False) -> CompiledStaircase:
    """Exact staircase for a canonical MPS with every bond at most 2."""
    if max(s.bond_dims, default=1) > 2:
        raise BondTooLargeError(f"staircase compilation needs bonds <= 2, got {s.bond_dims}")
    s = _left_canonical(s)
    n = s.n
    gates = []
    for k in range(n - 1, 0, -1):
        v = _padded_isometry(s.tensors[k], 2)
        u = embed_isometry(v)
        gates.append(StaircaseGate(k - 1, u, kak_decompose(u)))
    b = embed_isometry(s.tensors[0][0])
    return CompiledStaircase(n, tuple(gates), b, zyz_angles(b), adjoint)


def staircase_state(cs: CompiledStaircase, input_state: np.ndarray | None = None) -> np.ndarray:
    c = cs.circuit()
    return run(c, np.zeros(0), zero_state(cs.n) if input_state is None else input_state)


def state_fidelity(a: np.ndarray, b: np.ndarray) -> float:
    return float(abs(np.vdot(a, b)) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def staircase_fidelity(cs: CompiledStaircase, s: MPS) -> float:
    """Fidelity of the prepared state with the MPS (preparation convention)."""
    prep = cs.as_adjoint(False)
    return state_fidelity(staircase_state(prep), to_dense(s))


def chi4_block_unitaries(s: MPS) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Exact preparation of a bond-4 MPS with 3-qubit (8x8) blocks.

    Bond ``a_k`` (between sites ``k`` and ``k+1``) occupies qubits
    ``(k-1, k)``. Blocks are returned in application order as
    ``(qubits, unitary)``.
    """
    if max(s.bond_dims, default=1) > 4:
        raise BondTooLargeError("bond dimension exceeds 4")
    s = _left_canonical(s)
    n = s.n
    if n < 3:
        raise CompileError("three-qubit blocks need at least three sites")
    blocks = []
    for k in range(n - 1, 1, -1):
        v = _padded_isometry(s.tensors[k], 4)
        blocks.append(((k - 2, k - 1, k), embed_isometry(v)))
    blocks.append(((0, 1), embed_isometry(_padded_isometry(s.tensors[1], 2))))
    blocks.append(((0,), embed_isometry(s.tensors[0][0])))
    return blocks
