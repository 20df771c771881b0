"""Matrix product states, operators and classical ground-state optimizers.

Site tensors have axes ``(left_bond, phys, right_bond)`` with ``phys = 2``;
MPO tensors have axes ``(left_bond, phys_out, phys_in, right_bond)``. Site 0
is qubit 0, the most significant bit of dense state vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .constants import TOL
from .pauli import PAULI_MATRICES, PauliSum
from .tensor_core import check_hermitian, hermitian_expm, qr_decompose, svd_truncated

CANONICAL_FORMS = ("none", "left", "right")


class MPSError(ValueError):
    pass


@dataclass(frozen=True)
class MPS:
    tensors: tuple[np.ndarray, ...]
    canonical_form: str = "none"

    def __post_init__(self):
        ts = tuple(np.ascontiguousarray(t, dtype=complex) for t in self.tensors)
        if not ts:
            raise MPSError("an MPS needs at least one site")
        if self.canonical_form not in CANONICAL_FORMS:
            raise MPSError(f"unknown canonical form {self.canonical_form!r}")
        for k, t in enumerate(ts):
            if t.ndim != 3 or t.shape[1] != 2:
                raise MPSError(f"site {k}: expected (left, 2, right) tensor, got {t.shape}")
            if k and ts[k - 1].shape[2] != t.shape[0]:
                raise MPSError(f"bond mismatch between sites {k - 1} and {k}")
        if ts[0].shape[0] != 1 or ts[-1].shape[2] != 1:
            raise MPSError("boundary bonds must have dimension 1")
        object.__setattr__(self, "tensors", ts)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def chi(self) -> int:
        return max(self.bond_dims, default=1)

    def norm(self) -> float:
        return math.sqrt(max(overlap(self, self).real, 0.0))


@dataclass(frozen=True)
class MPO:
    tensors: tuple[np.ndarray, ...]

    def __post_init__(self):
        ts = tuple(np.ascontiguousarray(t, dtype=complex) for t in self.tensors)
        for k, w in enumerate(ts):
            if w.ndim != 4 or w.shape[1:3] != (2, 2):
                raise MPSError(f"site {k}: expected (left, 2, 2, right) tensor, got {w.shape}")
            if k and ts[k - 1].shape[3] != w.shape[0]:
                raise MPSError(f"MPO bond mismatch between sites {k - 1} and {k}")
        if ts[0].shape[0] != 1 or ts[-1].shape[3] != 1:
            raise MPSError("MPO boundary bonds must have dimension 1")
        object.__setattr__(self, "tensors", ts)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [w.shape[3] for w in self.tensors[:-1]]

    def to_dense(self) -> np.ndarray:
        if self.n > 12:
            raise MPSError("dense MPO is limited to 12 sites")
        acc = self.tensors[0][0]  # (out, in, right)
        for w in self.tensors[1:]:
            acc = np.einsum("abk,kcdr->acbdr", acc, w)
            o, c, i, d, r = acc.shape
            acc = acc.reshape(o * c, i * d, r)
        return acc[:, :, 0]


# --- construction -------------------------------------------------------


def product_state(n: int, angles: Sequence[float] | None = None) -> MPS:
    """Bond-dimension-1 MPS with site ``k`` in ``(cos a_k, sin a_k)``."""
    if n < 1:
        raise MPSError("product_state needs n >= 1")
    angles = np.zeros(n) if angles is None else np.asarray(angles, dtype=float)
    if angles.shape != (n,):
        raise MPSError(f"expected {n} angles, got shape {angles.shape}")
    tensors = [np.array([math.cos(a), math.sin(a)], dtype=complex).reshape(1, 2, 1) for a in angles]
    return MPS(tuple(tensors), "left")


def basis_state(bits: Sequence[int]) -> MPS:
    tensors = []
    for b in bits:
        t = np.zeros((1, 2, 1), dtype=complex)
        t[0, int(b), 0] = 1.0
        tensors.append(t)
    return MPS(tuple(tensors), "left")


def max_bond_dims(n: int, chi_max: int) -> list[int]:
    return [min(chi_max, 2 ** (k + 1), 2 ** (n - k - 1)) for k in range(n - 1)]


def random_mps(n: int, chi: int, seed: int | np.random.Generator | None = None, *,
               complex_entries: bool = False) -> MPS:
    """Random MPS with standard-normal entries, left-canonicalized."""
    rng = np.random.default_rng(seed)
    dims = [1] + max_bond_dims(n, chi) + [1]
    tensors = []
    for k in range(n):
        shape = (dims[k], 2, dims[k + 1])
        t = rng.standard_normal(shape)
        if complex_entries:
            t = t + 1j * rng.standard_normal(shape)
        tensors.append(t)
    return canonicalize(MPS(tuple(tensors)), "left")


def mpo_from_pauli_sum(h: PauliSum, *, compress: bool = True, cutoff: float = 1e-13) -> MPO:
    """Exact MPO for a Pauli sum: direct sum of product terms, then SVD-compressed."""
    n = h.n
    terms = h.terms if h.terms else ((0.0, ()),)
    t = len(terms)
    tensors = []
    for k in range(n):
        left = 1 if k == 0 else t
        right = 1 if k == n - 1 else t
        w = np.zeros((left, 2, 2, right), dtype=complex)
        for j, (coeff, string) in enumerate(terms):
            op = PAULI_MATRICES[dict(string).get(k, "I")]
            if k == 0:
                op = coeff * op
            w[0 if k == 0 else j, :, :, 0 if k == n - 1 else j] = op
        tensors.append(w)
    if n == 1:
        w = tensors[0]
        return MPO((w.sum(axis=3, keepdims=True) if w.shape[3] > 1 else w,))
    mpo = MPO(tuple(tensors))
    return compress_mpo(mpo, cutoff) if compress else mpo


def compress_mpo(mpo: MPO, cutoff: float = 1e-13) -> MPO:
    """Two-pass SVD compression of MPO bonds, dropping relative weights below ``cutoff``."""
    ws = [w.copy() for w in mpo.tensors]
    n = len(ws)
    # left-to-right QR
    for k in range(n - 1):
        l, o, i, r = ws[k].shape
        q, rr = qr_decompose(ws[k].reshape(l * o * i, r), allow_wide=True)
        ws[k] = q.reshape(l, o, i, q.shape[1])
        ws[k + 1] = np.tensordot(rr, ws[k + 1], axes=(1, 0))
    # right-to-left truncated SVD
    for k in range(n - 1, 0, -1):
        l, o, i, r = ws[k].shape
        u, s, v = svd_truncated(ws[k].reshape(l, o * i * r), chi_max=l, cutoff=cutoff)
        ws[k] = v.reshape(v.shape[0], o, i, r)
        ws[k - 1] = np.tensordot(ws[k - 1], u * s, axes=(3, 0))
    return MPO(tuple(ws))


# --- canonical forms ----------------------------------------------------


def _left_sweep(tensors: list[np.ndarray], start: int, stop: int) -> None:
    """QR sweep making sites ``start .. stop-1`` left-isometric, pushing R into ``stop``."""
    for k in range(start, stop):
        l, d, r = tensors[k].shape
        q, rr = qr_decompose(tensors[k].reshape(l * d, r), allow_wide=True)
        tensors[k] = q.reshape(l, d, q.shape[1])
        tensors[k + 1] = np.tensordot(rr, tensors[k + 1], axes=(1, 0))


def _right_sweep(tensors: list[np.ndarray], start: int, stop: int) -> None:
    """LQ sweep making sites ``start .. stop+1`` (descending) right-isometric, pushing L into ``stop``."""
    for k in range(start, stop, -1):
        l, d, r = tensors[k].shape
        q, rr = qr_decompose(tensors[k].reshape(l, d * r).T, allow_wide=True)
        tensors[k] = q.T.reshape(q.shape[1], d, r)
        tensors[k - 1] = np.tensordot(tensors[k - 1], rr.T, axes=(2, 0))


def _mixed_canonical(tensors: list[np.ndarray], center: int) -> None:
    _left_sweep(tensors, 0, center)
    _right_sweep(tensors, len(tensors) - 1, center)


def canonicalize(s: MPS, form: str = "left") -> MPS:
    """Return the same normalized state with every tensor an isometry.

    ``left``: each ``(left*phys, right)`` reshape has orthonormal columns.
    ``right``: each ``(left, phys*right)`` reshape has orthonormal rows.
    The global phase of the state is preserved.
    """
    if form not in ("left", "right"):
        raise MPSError(f"form must be 'left' or 'right', got {form!r}")
    ts = [t.copy() for t in s.tensors]
    n = len(ts)
    if form == "left":
        _left_sweep(ts, 0, n - 1)
        last = ts[-1]
        nrm = np.linalg.norm(last)
        if nrm == 0 or not np.isfinite(nrm):
            raise MPSError("cannot canonicalize a zero-norm state")
        ts[-1] = last / nrm
        # shrink the final bond if the QR produced an over-sized one
    else:
        _right_sweep(ts, n - 1, 0)
        first = ts[0]
        nrm = np.linalg.norm(first)
        if nrm == 0 or not np.isfinite(nrm):
            raise MPSError("cannot canonicalize a zero-norm state")
        ts[0] = first / nrm
    return MPS(tuple(ts), form)


def isometry_defect(s: MPS, form: str) -> float:
    """Largest deviation from the isometry condition over all sites."""
    worst = 0.0
    for t in s.tensors:
        l, d, r = t.shape
        if form == "left":
            m = t.reshape(l * d, r)
            g = m.conj().T @ m
        else:
            m = t.reshape(l, d * r)
            g = m @ m.conj().T
        worst = max(worst, float(np.max(np.abs(g - np.eye(g.shape[0])))))
    return worst


# --- contractions -------------------------------------------------------


def to_dense(s: MPS, cap: int = TOL.dense_qubit_cap) -> np.ndarray:
    if s.n > cap:
        raise MPSError(f"to_dense is limited to {cap} qubits (got {s.n})")
    acc = s.tensors[0][0]  # (phys, right)
    for t in s.tensors[1:]:
        acc = np.tensordot(acc, t, axes=(1, 0))
        acc = acc.reshape(-1, t.shape[2])
    return acc[:, 0].copy()


def from_dense(psi: np.ndarray, chi_max: int | None = None, cutoff: float = 0.0) -> MPS:
    """Exact (or truncated) MPS of a dense state by successive SVDs."""
    psi = np.asarray(psi, dtype=complex)
    n = int(round(math.log2(psi.size)))
    if 2**n != psi.size:
        raise MPSError("state length must be a power of two")
    chi_max = chi_max or 2**n
    tensors = []
    rest = psi.reshape(1, -1)
    for k in range(n - 1):
        l = rest.shape[0]
        m = rest.reshape(l * 2, -1)
        u, sv, v = svd_truncated(m, chi_max, cutoff)
        tensors.append(u.reshape(l, 2, -1))
        rest = sv[:, None] * v
    tensors.append(rest.reshape(rest.shape[0], 2, 1))
    return MPS(tuple(tensors), "left")


def overlap(a: MPS, b: MPS) -> complex:
    """``<a|b>`` by a left-to-right transfer-matrix contraction."""
    if a.n != b.n:
        raise MPSError("overlap needs states of equal length")
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.einsum("ab,asc,bsd->cd", env, ta.conj(), tb, optimize=True)
    return complex(env[0, 0])


def expectation(s: MPS, h: MPO | PauliSum) -> float:
    """Real part of ``<s|H|s>`` (the state is assumed normalized)."""
    if isinstance(h, PauliSum):
        h = mpo_from_pauli_sum(h)
    if s.n != h.n:
        raise MPSError("state and operator lengths differ")
    env = np.ones((1, 1, 1), dtype=complex)
    for t, w in zip(s.tensors, h.tensors):
        env = np.einsum("awb,asc,wstv,btd->cvd", env, t.conj(), w, t, optimize=True)
    val = complex(env[0, 0, 0])
    return val.real


# --- gates and truncation -----------------------------------------------


def apply_two_site_gate(
    s: MPS,
    gate: np.ndarray,
    site: int,
    chi_max: int,
    cutoff: float = TOL.svd_cutoff,
) -> MPS:
    """Apply a 4x4 gate to sites ``(site, site+1)``, re-split and renormalize.

    The gate's row/column index is ``2*s_site + s_{site+1}``.
    """
    if not 0 <= site < s.n - 1:
        raise MPSError(f"site {site} out of range for a two-site gate on {s.n} sites")
    ts = [t.copy() for t in s.tensors]
    _mixed_canonical(ts, site)
    ts = _apply_at_center(ts, np.asarray(gate, dtype=complex), site, chi_max, cutoff)
    return MPS(tuple(ts), "none")


def _apply_at_center(ts, gate, site, chi_max, cutoff):
    a, b = ts[site], ts[site + 1]
    l, r = a.shape[0], b.shape[2]
    theta = np.tensordot(a, b, axes=(2, 0))  # (l, 2, 2, r)
    g = gate.reshape(2, 2, 2, 2)
    theta = np.einsum("stuv,luvr->lstr", g, theta)
    u, sv, v = svd_truncated(theta.reshape(l * 2, 2 * r), chi_max, cutoff)
    nrm = np.linalg.norm(sv)
    if nrm == 0 or not np.isfinite(nrm):
        raise MPSError("gate application annihilated the state")
    sv = sv / nrm
    ts[site] = u.reshape(l, 2, -1)
    ts[site + 1] = (sv[:, None] * v).reshape(-1, 2, r)
    return ts


SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def truncate(s: MPS, chi_max: int, cutoff: float = 0.0) -> tuple[MPS, float]:
    """SVD-truncate every bond to ``chi_max``.

    Returns the renormalized, left-canonical truncated state and its fidelity
    ``|<trunc|orig>|^2`` with the normalized input.
    """
    if chi_max < 1:
        raise MPSError("chi_max must be >= 1")
    orig = canonicalize(s, "left")
    ts = [t.copy() for t in orig.tensors]
    n = len(ts)
    for k in range(n - 1, 0, -1):
        l, d, r = ts[k].shape
        u, sv, v = svd_truncated(ts[k].reshape(l, d * r), chi_max, cutoff)
        ts[k] = v.reshape(-1, d, r)
        ts[k - 1] = np.tensordot(ts[k - 1], u * sv, axes=(2, 0))
    out = canonicalize(MPS(tuple(ts)), "left")
    fid = abs(overlap(out, orig)) ** 2
    return out, float(fid)


# --- imaginary-time TEBD ------------------------------------------------


def _normalize_bonds(bonds) -> list[tuple[int, int, np.ndarray]]:
    out = []
    for b in bonds:
        if len(b) == 2:
            i, h = b
            j = i + 1
        else:
            i, j, h = b
        i, j = int(i), int(j)
        h = check_hermitian(np.asarray(h, dtype=complex))
        if h.shape != (4, 4):
            raise MPSError("two-site terms must be 4x4")
        if i == j:
            raise MPSError("two-site term needs two distinct sites")
        if i > j:
            # relabel (j, i): swap the tensor factors of h
            h = SWAP @ h @ SWAP
            i, j = j, i
        out.append((i, j, h))
    return out


def _apply_long_range(ts, gate, i, j, chi_max, cutoff):
    # bring site j next to i with swaps, apply, and swap back
    for k in range(j - 1, i, -1):
        _mixed_canonical(ts, k)
        ts = _apply_at_center(ts, SWAP, k, chi_max, cutoff)
    _mixed_canonical(ts, i)
    ts = _apply_at_center(ts, gate, i, chi_max, cutoff)
    for k in range(i + 1, j):
        _mixed_canonical(ts, k)
        ts = _apply_at_center(ts, SWAP, k, chi_max, cutoff)
    return ts


def tebd_imaginary(
    s: MPS,
    bonds: Iterable,
    dtau: float = 1e-3,
    steps: int = 30,
    chi_max: int = 2,
    cutoff: float = TOL.svd_cutoff,
) -> MPS:
    """First-order Trotterized imaginary-time evolution ``exp(-dtau*H)``.

    ``bonds`` holds two-site terms ``(site, h)`` acting on ``(site, site+1)``
    or ``(i, j, h)`` for arbitrary pairs (routed through swap gates). Each
    step applies even nearest-neighbour bonds, then odd ones, then any
    long-range terms; the state is renormalized after every gate.
    """
    if dtau <= 0:
        raise MPSError("dtau must be positive")
    if steps < 0:
        raise MPSError("steps must be non-negative")
    terms = _normalize_bonds(bonds)
    if steps == 0:
        return s
    if any(j >= s.n for _, j, _ in terms):
        raise MPSError("bond site out of range")
    # sum terms on the same pair so each pair gets a single gate per step
    merged: dict[tuple[int, int], np.ndarray] = {}
    for i, j, h in terms:
        merged[(i, j)] = merged.get((i, j), 0) + h
    gates = {pair: hermitian_expm(h, -dtau) for pair, h in merged.items()}
    near = sorted(p for p in gates if p[1] == p[0] + 1)
    order = [p for p in near if p[0] % 2 == 0] + [p for p in near if p[0] % 2 == 1]
    order += sorted(p for p in gates if p[1] > p[0] + 1)
    ts = [t.copy() for t in s.tensors]
    for _ in range(steps):
        for i, j in order:
            if j == i + 1:
                _mixed_canonical(ts, i)
                ts = _apply_at_center(ts, gates[(i, j)], i, chi_max, cutoff)
            else:
                ts = _apply_long_range(ts, gates[(i, j)], i, j, chi_max, cutoff)
    return MPS(tuple(ts), "none")


def bonds_energy(s: MPS, bonds) -> float:
    """Energy of a two-site term list, evaluated through the dense state."""
    terms = _normalize_bonds(bonds)
    psi = to_dense(s)
    psi = psi / np.linalg.norm(psi)
    n = s.n
    total = 0.0
    for i, j, h in terms:
        t = psi.reshape([2] * n)
        t = np.moveaxis(t, (i, j), (0, 1)).reshape(4, -1)
        total += float(np.real(np.vdot(t, h @ t)))
    return total


# --- two-site DMRG ------------------------------------------------------


@dataclass
class DMRGResult:
    state: MPS
    energy: float
    sweep_energies: list[float] = field(default_factory=list)


def _left_env(env, t, w):
    # env (a, w, b): a bra bond, b ket bond
    return np.einsum("awb,asc,wstv,btd->cvd", env, t.conj(), w, t, optimize=True)


def _right_env(env, t, w):
    return np.einsum("cvd,asc,wstv,btd->awb", env, t.conj(), w, t, optimize=True)


def dmrg(
    h: MPO,
    n: int | None = None,
    chi_max: int = 16,
    sweeps: int = 10,
    seed: int | None = 0,
    cutoff: float = TOL.svd_cutoff,
    initial: MPS | None = None,
) -> DMRGResult:
    """Two-site DMRG with a dense local eigensolver.

    Each sweep runs left-to-right then right-to-left. The recorded sweep
    energy is the variational energy of the state at the end of the sweep.
    """
    if isinstance(h, PauliSum):
        h = mpo_from_pauli_sum(h)
    n = h.n if n is None else n
    if n != h.n:
        raise MPSError("qubit count does not match the operator")
    if chi_max < 1 or sweeps < 1:
        raise MPSError("chi_max and sweeps must be >= 1")
    ws = h.tensors
    if n == 1:
        mat = ws[0][0, :, :, 0]
        vals, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
        state = MPS((vecs[:, 0].reshape(1, 2, 1),), "left")
        return DMRGResult(state, float(vals[0]), [float(vals[0])] * sweeps)

    start = initial if initial is not None else random_mps(n, chi_max, seed)
    ts = list(canonicalize(start, "right").tensors)
    right = [None] * (n + 1)
    right[n] = np.ones((1, 1, 1), dtype=complex)
    for k in range(n - 1, 0, -1):
        right[k] = _right_env(right[k + 1], ts[k], ws[k])
    left = [None] * (n + 1)
    left[0] = np.ones((1, 1, 1), dtype=complex)

    def local_solve(i):
        heff = np.einsum(
            "awb,wstx,xuvy,cyd->asucbtvd",
            left[i], ws[i], ws[i + 1], right[i + 2], optimize=True,
        )
        la, _, _, rc = heff.shape[:4]
        dim = la * 4 * rc
        heff = heff.reshape(dim, dim)
        heff = 0.5 * (heff + heff.conj().T)
        vals, vecs = np.linalg.eigh(heff)
        return float(vals[0]), vecs[:, 0].reshape(la, 2, 2, rc)

    energies = []
    for _ in range(sweeps):
        for i in range(n - 1):
            _, theta = local_solve(i)
            l, _, _, r = theta.shape
            u, sv, v = svd_truncated(theta.reshape(l * 2, 2 * r), chi_max, cutoff)
            sv = sv / np.linalg.norm(sv)
            ts[i] = u.reshape(l, 2, -1)
            ts[i + 1] = (sv[:, None] * v).reshape(-1, 2, r)
            left[i + 1] = _left_env(left[i], ts[i], ws[i])
        for i in range(n - 2, -1, -1):
            _, theta = local_solve(i)
            l, _, _, r = theta.shape
            u, sv, v = svd_truncated(theta.reshape(l * 2, 2 * r), chi_max, cutoff)
            sv = sv / np.linalg.norm(sv)
            ts[i + 1] = v.reshape(-1, 2, r)
            ts[i] = (u * sv).reshape(l, 2, -1)
            right[i + 1] = _right_env(right[i + 2], ts[i + 1], ws[i + 1])
        energies.append(expectation(MPS(tuple(ts)), h))
    state = canonicalize(MPS(tuple(ts)), "left")
    return DMRGResult(state, expectation(state, h), energies)


def dmrg_ground_state(h: MPO | PauliSum, n: int | None = None, chi_max: int = 16,
                      sweeps: int = 10, seed: int | None = 0) -> tuple[MPS, float]:
    res = dmrg(h, n, chi_max, sweeps, seed)
    return res.state, res.energy


# --- serialization ------------------------------------------------------


def mps_to_json(s: MPS) -> str:
    """JSON document; tensors as nested ``[re, im]`` pairs, axes (left, phys, right)."""
    doc = {
        "format": "mps",
        "n": s.n,
        "chi": s.chi,
        "canonical_form": s.canonical_form,
        "axis_order": ["left", "phys", "right"],
        "tensors": [
            np.stack([t.real, t.imag], axis=-1).tolist() for t in s.tensors
        ],
    }
    return json.dumps(doc)


def mps_from_json(text: str) -> MPS:
    doc = json.loads(text)
    if doc.get("format", "mps") != "mps":
        raise MPSError("document is not an MPS")
    tensors = []
    for raw in doc["tensors"]:
        arr = np.asarray(raw, dtype=float)
        if arr.ndim != 4 or arr.shape[-1] != 2:
            raise MPSError("tensor entries must be [re, im] pairs on a rank-3 tensor")
        tensors.append(arr[..., 0] + 1j * arr[..., 1])
    s = MPS(tuple(tensors), doc.get("canonical_form", "none"))
    if s.n != doc["n"]:
        raise MPSError("declared n does not match the tensor list")
    return s
