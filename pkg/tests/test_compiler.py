from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mps_pretrain import mps as M
from mps_pretrain.circuit import AllZerosMeasure, CircuitObjective, full_operator, run
from mps_pretrain.compiler import (
    BondTooLargeError,
    CompileError,
    approx_compile_chi4,
    bare_staircase_circuit,
    build_brickwall,
    chi4_block_unitaries,
    embed_isometry,
    init_brickwall,
    mps_to_staircase,
    required_depth,
    staircase_fidelity,
    staircase_state,
    state_fidelity,
)
from mps_pretrain.compiler.brickwall import brickwall_pairs, layout_parity
from mps_pretrain.tensor_core import is_unitary


def test_embed_isometry_completes_columns(rng):
    v, _ = np.linalg.qr(rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2)))
    u = embed_isometry(v)
    assert is_unitary(u)
    assert np.array_equal(u[:, :2], v)
    with pytest.raises(CompileError):
        embed_isometry(2 * v)
    with pytest.raises(CompileError):
        embed_isometry(np.ones((2, 3)))


def test_embed_isometry_handles_basis_vectors():
    v = np.eye(4)[:, [0, 3]]
    assert is_unitary(embed_isometry(v))


@given(st.integers(2, 8), st.integers(0, 2**31 - 1), st.booleans())
def test_staircase_prepares_chi2_mps_exactly(n, seed, cplx):
    s = M.random_mps(n, 2, seed, complex_entries=cplx)
    cs = mps_to_staircase(s)
    assert staircase_fidelity(cs, s) >= 1 - 1e-9
    assert all(is_unitary(g.unitary) for g in cs.gates)


def test_staircase_accepts_right_canonical_and_rejects_raw():
    s = M.canonicalize(M.random_mps(5, 2, 3), "right")
    assert staircase_fidelity(mps_to_staircase(s), s) >= 1 - 1e-9
    raw = M.MPS(s.tensors, "none")
    with pytest.raises(CompileError):
        mps_to_staircase(raw)


def test_staircase_rejects_large_bonds():
    with pytest.raises(BondTooLargeError):
        mps_to_staircase(M.random_mps(6, 4, 0))


def test_product_state_compiles_to_separable_gates():
    s = M.product_state(4, [0.1, 0.5, 0.9, 1.3])
    cs = mps_to_staircase(s)
    assert staircase_fidelity(cs, s) >= 1 - 1e-12


def test_adjoint_staircase_measures_overlap(rng):
    s = M.random_mps(5, 2, 4, complex_entries=True)
    cs = mps_to_staircase(s, adjoint=True)
    psi = M.to_dense(s)
    for _ in range(3):
        phi = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        phi /= np.linalg.norm(phi)
        out = staircase_state(cs, phi)
        assert np.isclose(abs(out[0]) ** 2, abs(np.vdot(psi, phi)) ** 2, atol=1e-12)


@pytest.mark.parametrize("adjoint", [False, True])
@pytest.mark.parametrize("n", [2, 3, 4, 5, 6, 7])
def test_placed_gates_fit_brickwall_slots(n, adjoint):
    cs = mps_to_staircase(M.random_mps(n, 2, n), adjoint=adjoint)
    slots = set(brickwall_pairs(n, required_depth(n), layout_parity(n, adjoint)))
    placed = {(p.layer, p.pair) for p in cs.placed_gates()}
    assert placed <= slots
    assert len(placed) == n - 1


@pytest.mark.parametrize("offdiag", ["full-KAK", "ry-crx"])
@pytest.mark.parametrize("n, extra", [(2, 0), (4, 2), (5, 3), (6, 0)])
def test_identity_padding_reproduces_staircase(n, extra, offdiag):
    s = M.random_mps(n, 2, 10 + n, complex_entries=True)
    cs = mps_to_staircase(s)
    c = init_brickwall(cs, required_depth(n) + extra, offdiag)
    padded = run(c, c.initial_params())
    bare = run(bare_staircase_circuit(cs), bare_staircase_circuit(cs).initial_params())
    assert np.max(np.abs(padded - bare)) < 1e-10
    assert state_fidelity(padded, M.to_dense(s)) >= 1 - 1e-9


def test_adjoint_brickwall_reads_overlap(rng):
    s = M.random_mps(4, 2, 5)
    c = init_brickwall(mps_to_staircase(s, adjoint=True), 4)
    phi = rng.standard_normal(16)
    phi /= np.linalg.norm(phi)
    obj = CircuitObjective(c, AllZerosMeasure(), phi)
    assert np.isclose(obj.value(c.initial_params()), abs(np.vdot(M.to_dense(s), phi)) ** 2, atol=1e-12)


def test_brickwall_depth_checks():
    cs = mps_to_staircase(M.random_mps(6, 2, 0))
    with pytest.raises(CompileError):
        init_brickwall(cs, 4)
    with pytest.raises(CompileError):
        build_brickwall(4, 3, "bogus")


def test_brickwall_metadata_counts_parameters():
    c = build_brickwall(4, 4, "ry-crx")
    blocks = c.meta["blocks"]
    assert sum(b["size"] for b in blocks) == c.num_params
    assert all(b["role"] == "padding" for b in blocks)
    assert np.allclose(run(c, np.zeros(c.num_params)), np.eye(16)[0])


def test_chi4_blocks_prepare_state_exactly():
    s = M.random_mps(6, 4, 2, complex_entries=True)
    psi = np.zeros(64, dtype=complex)
    psi[0] = 1
    for qubits, u in chi4_block_unitaries(s):
        psi = full_operator(u, qubits, 6) @ psi
    assert state_fidelity(psi, M.to_dense(s)) >= 1 - 1e-10


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_chi4_fit_beats_truncation_monotonically(seed):
    s = M.random_mps(6, 4, seed, complex_entries=bool(seed % 2))
    fit = approx_compile_chi4(s, iterations=40)
    assert fit.fidelity >= fit.truncation_fidelity - 1e-12
    assert np.all(np.diff(fit.trace) >= -1e-12)
    assert np.isclose(fit.trace[0], fit.truncation_fidelity)
    c = init_brickwall(fit, 6)
    assert np.isclose(state_fidelity(run(c, c.initial_params()), M.to_dense(s)), fit.fidelity, atol=1e-9)


def test_chi4_fit_is_exact_on_chi2_input():
    s = M.random_mps(5, 2, 8)
    fit = approx_compile_chi4(s, iterations=5)
    assert fit.fidelity >= 1 - 1e-9
    assert len(fit.trace) == 1


def test_chi4_fit_rejects_large_bonds():
    with pytest.raises(BondTooLargeError):
        approx_compile_chi4(M.random_mps(8, 8, 0))
