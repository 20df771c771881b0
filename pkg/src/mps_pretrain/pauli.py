"""Real-weighted sums of Pauli strings.

Qubit 0 is the most significant bit of a basis-state index, so for ``n``
qubits the bit of qubit ``q`` sits at position ``n - 1 - q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PauliString = tuple[tuple[int, str], ...]


def _normalize_string(string: Mapping[int, str] | Iterable[tuple[int, str]]) -> PauliString:
    items = string.items() if isinstance(string, Mapping) else string
    out: dict[int, str] = {}
    for q, p in items:
        q = int(q)
        p = str(p).upper()
        if p not in ("X", "Y", "Z"):
            raise ValueError(f"invalid Pauli letter {p!r}")
        if q < 0:
            raise ValueError(f"negative qubit index {q}")
        if q in out:
            raise ValueError(f"qubit {q} appears twice in one Pauli string")
        out[q] = p
    return tuple(sorted(out.items()))


@dataclass(frozen=True)
class PauliSum:
    """``sum_k c_k P_k`` with real ``c_k``; an empty string is the identity."""

    n: int
    terms: tuple[tuple[float, PauliString], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("PauliSum needs at least one qubit")
        clean = []
        for coeff, string in self.terms:
            if isinstance(coeff, complex) or np.iscomplexobj(coeff):
                if abs(np.imag(coeff)) > 0:
                    raise ValueError("Pauli coefficients must be real")
                coeff = np.real(coeff)
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValueError("Pauli coefficients must be finite")
            s = _normalize_string(string)
            if s and s[-1][0] >= self.n:
                raise ValueError(f"qubit index {s[-1][0]} out of range for n={self.n}")
            clean.append((coeff, s))
        object.__setattr__(self, "terms", tuple(clean))

    @classmethod
    def from_terms(cls, n: int, terms) -> "PauliSum":
        return cls(n, tuple((c, _normalize_string(s)) for c, s in terms))

    def __neg__(self) -> "PauliSum":
        return PauliSum(self.n, tuple((-c, s) for c, s in self.terms))

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        return PauliSum(max(self.n, other.n), self.terms + other.terms)

    def scaled(self, factor: float) -> "PauliSum":
        return PauliSum(self.n, tuple((factor * c, s) for c, s in self.terms))

    def identity_part(self) -> float:
        return float(sum(c for c, s in self.terms if not s))

    # --- dense / sparse forms -------------------------------------------

    def _masks(self, string: PauliString) -> tuple[int, int, int]:
        flip = 0
        zmask = 0
        ny = 0
        for q, p in string:
            bit = 1 << (self.n - 1 - q)
            if p in ("X", "Y"):
                flip |= bit
            if p in ("Y", "Z"):
                zmask |= bit
            if p == "Y":
                ny += 1
        return flip, zmask, ny

    @cached_property
    def _grouped(self) -> tuple[tuple[int, np.ndarray], ...]:
        """Terms grouped by bit-flip mask as ``(flip, diag)`` pairs.

        For each group ``(H psi)[y] = diag[y ^ flip] * psi[y ^ flip]``.
        """
        dim = 1 << self.n
        idx = np.arange(dim, dtype=np.int64)
        groups: dict[int, np.ndarray] = {}
        for coeff, string in self.terms:
            flip, zmask, ny = self._masks(string)
            # P|x> = c(x)|x ^ flip> with c(x) = i^ny * (-1)^popcount(x & zmask)
            parity = _popcount(idx & zmask) & 1
            phase = (1j**ny) * (1.0 - 2.0 * parity)
            if flip not in groups:
                groups[flip] = np.zeros(dim, dtype=complex)
            groups[flip] += coeff * phase
        return tuple(sorted(groups.items()))

    def apply(self, psi: np.ndarray) -> np.ndarray:
        """Apply the operator to state vectors stored along the last axis."""
        psi = np.asarray(psi, dtype=complex)
        dim = 1 << self.n
        if psi.shape[-1] != dim:
            raise ValueError(f"state dimension {psi.shape[-1]} does not match 2**{self.n}")
        idx = np.arange(dim, dtype=np.int64)
        out = np.zeros_like(psi)
        for flip, diag in self._grouped:
            src = idx ^ flip
            out += diag[src] * psi[..., src]
        return out

    def expectation(self, psi: np.ndarray) -> np.ndarray:
        """Real part of ``<psi|H|psi>`` for states along the last axis."""
        psi = np.asarray(psi, dtype=complex)
        dim = 1 << self.n
        idx = np.arange(dim, dtype=np.int64)
        total = np.zeros(psi.shape[:-1], dtype=complex)
        for flip, diag in self._grouped:
            if flip == 0:
                total += np.abs(psi) ** 2 @ diag
            else:
                src = idx ^ flip
                total += np.sum(psi.conj() * diag[src] * psi[..., src], axis=-1)
        return total.real

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n
        idx = np.arange(dim, dtype=np.int64)
        mat = sp.csr_matrix((dim, dim), dtype=complex)
        for flip, diag in self._grouped:
            # row y, column y ^ flip
            mat = mat + sp.csr_matrix((diag[idx ^ flip], (idx, idx ^ flip)), shape=(dim, dim))
        return mat

    def to_dense(self) -> np.ndarray:
        if self.n > 14:
            raise ValueError("dense matrices are limited to 14 qubits")
        return self.to_sparse().toarray()

    # --- text format ----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for coeff, string in self.terms:
            ops = " ".join(f"{p}{q}" for q, p in string)
            lines.append(f"{coeff!r} {ops}".rstrip())
        return "\n".join(lines) + "\n"


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & np.uint64(1)
        x >>= np.uint64(1)
    return count.astype(np.int64)


def pauli_string_matrix(string: PauliString, n: int) -> np.ndarray:
    """Dense Kronecker-product matrix of one Pauli string (test oracle)."""
    letters = dict(string)
    out = np.array([[1.0 + 0j]])
    for q in range(n):
        out = np.kron(out, PAULI_MATRICES[letters.get(q, "I")])
    return out
