from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from mps_pretrain.circuit import (
    PARAM_KINDS,
    AllZerosMeasure,
    BCEMeasure,
    Circuit,
    CircuitError,
    CircuitObjective,
    EnergyMeasure,
    Gate,
    Simulator,
    circuit_unitary,
    encode_inputs,
    expectation,
    gate_matrices,
    kak_block,
    prob_all_zeros,
    ry_crx_block,
    run,
    zero_state,
)
from mps_pretrain.pauli import PAULI_MATRICES as P
from mps_pretrain.pauli import PauliSum


def random_circuit(rng, n, layers=3, with_fixed=True):
    gates = []
    for _ in range(layers):
        for kind in PARAM_KINDS:
            if kind in ("rz", "ry"):
                gates.append(Gate(kind, (int(rng.integers(n)),), float(rng.uniform(-3, 3))))
            else:
                a, b = rng.choice(n, 2, replace=False)
                gates.append(Gate(kind, (int(a), int(b)), float(rng.uniform(-3, 3))))
    if with_fixed:
        z = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        q, _ = np.linalg.qr(z)
        gates.insert(len(gates) // 2, Gate("fixed-unitary", (n - 1, 0), matrix=q))
    return Circuit(n, tuple(gates))


@pytest.mark.parametrize("kind, pauli", [("ry", "Y"), ("rz", "Z"), ("xx", "XX"), ("yy", "YY"), ("zz", "ZZ")])
def test_rotation_matrices_are_pauli_exponentials(kind, pauli):
    op = P[pauli[0]] if len(pauli) == 1 else np.kron(P[pauli[0]], P[pauli[1]])
    for t in (-2.1, 0.0, 0.4, 3.0):
        assert np.allclose(gate_matrices(kind, np.array(t)), expm(-0.5j * t * op))


def test_crx_matrix_is_controlled_rotation():
    t = 0.9
    proj1 = np.diag([0, 1]).astype(complex)
    expect = np.kron(np.eye(2) - proj1, np.eye(2)) + np.kron(proj1, expm(-0.5j * t * P["X"]))
    assert np.allclose(gate_matrices("crx", np.array(t)), expect)


@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_simulator_matches_dense_unitary(n, seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, n)
    psi = run(c, c.initial_params())
    assert np.allclose(psi, circuit_unitary(c)[:, 0], atol=1e-12)


def test_batched_rows_and_inputs(rng):
    c = random_circuit(rng, 3)
    params = rng.uniform(-3, 3, (4, c.num_params))
    inputs = encode_inputs(rng.uniform(0, 1.5, (5, 3)))
    states = Simulator(c).run(params, inputs)
    assert states.shape == (4, 5, 8)
    u = circuit_unitary(c, params[2])
    assert np.allclose(states[2, 3], u @ inputs[3])


def test_zero_angles_are_identity():
    c = Circuit(3, tuple(kak_block(0, 1) + kak_block(1, 2) + ry_crx_block(2, 0)))
    assert np.allclose(circuit_unitary(c), np.eye(8))


def test_encode_inputs_is_ry_product():
    x = np.array([0.3, 1.2])
    ry = lambda t: expm(-0.5j * t * P["Y"])
    expect = np.kron(ry(0.3) @ [1, 0], ry(1.2) @ [1, 0])
    assert np.allclose(encode_inputs(x), expect)
    with pytest.raises(CircuitError):
        encode_inputs([np.nan, 0.0])


def test_expectation_and_all_zeros_probability(rng):
    c = random_circuit(rng, 3)
    h = PauliSum.from_terms(3, [(0.7, {0: "X", 1: "Z"}), (-0.2, {2: "Y"})])
    psi = circuit_unitary(c)[:, 0]
    assert np.isclose(expectation(c, c.initial_params(), h), np.vdot(psi, h.to_dense() @ psi).real)
    assert np.isclose(prob_all_zeros(c, c.initial_params()), abs(psi[0]) ** 2)


def test_param_count_and_json_round_trip(rng):
    c = random_circuit(rng, 4)
    assert c.num_params == 3 * len(PARAM_KINDS)
    back = Circuit.from_json(c.to_json())
    assert back.topology() == c.topology()
    assert np.array_equal(back.initial_params(), c.initial_params())
    assert np.allclose(circuit_unitary(back), circuit_unitary(c))
    with pytest.raises(CircuitError):
        c.with_params(np.zeros(3))


def test_rejects_out_of_range_qubits():
    with pytest.raises(CircuitError):
        Circuit(2, (Gate("ry", (2,), 0.1),))


def central_difference(obj, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
    return g


def make_objective(rng, kind, n=3):
    c = random_circuit(rng, n, layers=2)
    if kind == "energy":
        h = PauliSum.from_terms(n, [(0.8, {0: "Z", 1: "Z"}), (-0.5, {1: "X"}), (0.3, {0: "Y", 2: "X"})])
        return CircuitObjective(c, EnergyMeasure(h, sign=float(rng.choice([-1, 1]))))
    if kind == "all-zeros":
        return CircuitObjective(c, AllZerosMeasure())
    x = rng.uniform(0, np.pi / 2, (6, n))
    y = rng.integers(0, 2, 6)
    return CircuitObjective(c, BCEMeasure(y), encode_inputs(2 * x))


@pytest.mark.parametrize("kind", ["energy", "all-zeros", "bce"])
@pytest.mark.parametrize("seed", range(4))
def test_shift_rule_gradients_match_finite_differences(kind, seed):
    rng = np.random.default_rng(seed)
    obj = make_objective(rng, kind)
    x = obj.circuit.initial_params()
    g = obj.gradient(x)
    fd = central_difference(obj, x)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-8)


def test_folded_projector_matches_full_resimulation(rng):
    obj = make_objective(rng, "bce", n=4)

    class Opaque:
        # same measure without the folding hook
        def __init__(self, m):
            self.m = m

        def measure(self, states):
            return self.m.measure(states)

        def combine(self, v):
            return self.m.combine(v)

        def combine_grad(self, v):
            return self.m.combine_grad(v)

    plain = CircuitObjective(obj.circuit, Opaque(obj.measure), obj.inputs)
    x = obj.circuit.initial_params()
    assert np.allclose(obj.gradient(x), plain.gradient(x), atol=1e-13)


def test_evaluation_counting(rng):
    obj = make_objective(rng, "energy")
    x = obj.circuit.initial_params()
    obj.value(x)
    assert (obj.value_evals, obj.gradient_evals) == (1, 0)
    obj.gradient(x)
    n_crx = obj.circuit.param_kinds().count("crx")
    shifts = 2 * (obj.circuit.num_params - n_crx) + 4 * n_crx
    assert obj.gradient_evals == 1 + shifts
    assert obj.evaluations == 2 + shifts


def test_energy_of_zero_state_is_diagonal_element():
    h = PauliSum.from_terms(2, [(1.5, {0: "Z"}), (0.5, {0: "X", 1: "X"}), (0.25, {})])
    c = Circuit(2, tuple(kak_block(0, 1)))
    obj = CircuitObjective(c, EnergyMeasure(h))
    assert obj.value(np.zeros(15)) == pytest.approx(h.to_dense()[0, 0].real, abs=1e-15)
    assert np.allclose(zero_state(2), [1, 0, 0, 0])
