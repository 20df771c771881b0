"""Approximate compilation of bond-dimension-4 MPS onto two gate diagonals.

The main diagonal starts from the exact staircase of the best bond-2
truncation; a second diagonal, two layers earlier, starts at the identity.
All gates are then refined by alternating sweeps that replace one gate at a
time with the unitary maximizing the overlap with the target state, given
all other gates. Each replacement is optimal for its gate, so the fidelity
trace never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mps import MPS, to_dense, truncate
from .staircase import BondTooLargeError, CompileError, PlacedGate, adjoint_layout, mps_to_staircase


@dataclass(frozen=True)
class TwoDiagonalGates:
    """Fitted main and adjacent diagonals in preparation layout (or its adjoint)."""

    n: int
    main: tuple[PlacedGate, ...]
    adjacent: tuple[PlacedGate, ...]
    fidelity: float
    truncation_fidelity: float
    trace: list[float] = field(default_factory=list)
    adjoint: bool = False

    def placed_gates(self) -> list[PlacedGate]:
        gates = list(self.main) + list(self.adjacent)
        return adjoint_layout(gates, self.n) if self.adjoint else gates

    def as_adjoint(self, adjoint: bool = True) -> "TwoDiagonalGates":
        return TwoDiagonalGates(self.n, self.main, self.adjacent, self.fidelity,
                                self.truncation_fidelity, list(self.trace), adjoint)


def _apply_pair(psi: np.ndarray, u: np.ndarray, pair: int, n: int) -> np.ndarray:
    t = psi.reshape(2**pair, 4, -1)
    return np.einsum("ij,ajb->aib", u, t).reshape(-1)


def _environment(phi: np.ndarray, chi: np.ndarray, pair: int) -> np.ndarray:
    """``E`` with ``<chi| G |phi> = Tr(G E)`` for a gate ``G`` on ``(pair, pair+1)``."""
    a = phi.reshape(2**pair, 4, -1)
    b = chi.reshape(2**pair, 4, -1)
    return np.einsum("aib,ajb->ij", a, b.conj())


def _best_unitary(e: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(e)
    return vh.conj().T @ u.conj().T


def _overlap(seq, target, n):
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1
    for g in seq:
        psi = _apply_pair(psi, g[2], g[1], n)
    return abs(np.vdot(target, psi)) ** 2


def approx_compile_chi4(
    s: MPS,
    iterations: int = 200,
    seed: int = 0,
    init_noise: float = 0.0,
    tol: float = 0.0,
) -> TwoDiagonalGates:
    """Fit main plus adjacent gate diagonals to a canonical MPS with bonds <= 4.

    One iteration is a forward and a backward sweep over all gates; the
    fidelity after each iteration is appended to ``trace`` (entry 0 is the
    starting fidelity). ``init_noise`` perturbs the identity start of the
    adjacent diagonal with seeded random generators; it is zero by default,
    which makes ``seed`` irrelevant. Iteration stops early once an
    iteration improves the fidelity by less than ``tol``.
    """
    if max(s.bond_dims, default=1) > 4:
        raise BondTooLargeError(f"approximate compilation supports bonds <= 4, got {s.bond_dims}")
    if s.canonical_form == "none":
        raise CompileError("MPS must be canonical before compiling")
    if iterations < 0:
        raise CompileError("iterations must be non-negative")
    n = s.n
    target = to_dense(s)
    target = target / np.linalg.norm(target)
    s2, trunc_fid = truncate(s, 2)
    main = mps_to_staircase(s2).placed_gates()
    rng = np.random.default_rng(seed)
    adjacent = []
    for i in range(max(n - 3, 0)):
        u = np.eye(4, dtype=complex)
        if init_noise > 0:
            h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            h = 0.5 * (h + h.conj().T)
            w, v = np.linalg.eigh(h)
            u = (v * np.exp(1j * init_noise * w)) @ v.conj().T
        adjacent.append(PlacedGate(n - 4 - i, i, u))

    # (layer, pair, unitary, is_main) in time order
    seq = sorted(
        [[g.layer, g.pair, g.unitary, True] for g in main]
        + [[g.layer, g.pair, g.unitary, False] for g in adjacent],
        key=lambda g: (g[0], g[1]),
    )
    fid = _overlap(seq, target, n)
    trace = [float(fid)]
    degenerate = max(s.bond_dims, default=1) <= 2
    if not degenerate:
        for _ in range(iterations):
            _sweep(seq, target, n)
            new = float(_overlap(seq, target, n))
            trace.append(new)
            gain = new - fid
            fid = new
            if tol > 0 and gain < tol:
                break
    main_out = tuple(PlacedGate(g[0], g[1], g[2]) for g in seq if g[3])
    adj_out = tuple(PlacedGate(g[0], g[1], g[2]) for g in seq if not g[3])
    return TwoDiagonalGates(n, main_out, adj_out, float(trace[-1]), float(trunc_fid), trace)


def _sweep(seq, target, n):
    m = len(seq)
    zero = np.zeros(2**n, dtype=complex)
    zero[0] = 1
    # forward: backward vectors chi_k = (G_m ... G_{k+1})^dag target
    chis = [None] * m
    chi = target.copy()
    for k in range(m - 1, -1, -1):
        chis[k] = chi
        chi = _apply_pair(chi, seq[k][2].conj().T, seq[k][1], n)
    phi = zero
    for k in range(m):
        seq[k][2] = _best_unitary(_environment(phi, chis[k], seq[k][1]))
        phi = _apply_pair(phi, seq[k][2], seq[k][1], n)
    # backward
    phis = [None] * m
    phi = zero
    for k in range(m):
        phis[k] = phi
        phi = _apply_pair(phi, seq[k][2], seq[k][1], n)
    chi = target.copy()
    for k in range(m - 1, -1, -1):
        seq[k][2] = _best_unitary(_environment(phis[k], chi, seq[k][1]))
        chi = _apply_pair(chi, seq[k][2].conj().T, seq[k][1], n)
