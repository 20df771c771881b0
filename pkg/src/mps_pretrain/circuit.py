"""Exact state-vector simulation of parametrized circuits with shift-rule gradients.

Qubit 0 is the most significant bit of a basis index. A two-qubit gate matrix
on ``(a, b)`` is indexed ``2*bit_a + bit_b``. Parametrized kinds:

* ``ry(t) = exp(-i t Y/2)``, ``rz(t) = exp(-i t Z/2)``
* ``xx/yy/zz(t) = exp(-i t PP/2)``
* ``crx(t)``: control on the first qubit applying ``exp(-i t X/2)``

Every parametrized gate owns one free parameter slot, numbered in gate order.
Evaluation is batched over parameter rows; consecutive gates acting inside
the same qubit pair are fused into a single 4x4 (or 2x2) matrix per row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pauli import PauliSum

PARAM_KINDS = ("rz", "ry", "crx", "xx", "yy", "zz")
GATE_KINDS = PARAM_KINDS + ("fixed-unitary",)
TWO_QUBIT_KINDS = ("crx", "xx", "yy", "zz")

# four-term shift rule for the controlled rotation (eigenvalues 0, +-1/2)
_CRX_C1 = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_CRX_C2 = (math.sqrt(2) - 1) / (4 * math.sqrt(2))
SHIFT_RULES = {
    "two-term": ((0.5, math.pi / 2), (-0.5, -math.pi / 2)),
    "four-term": (
        (_CRX_C1, math.pi / 2), (-_CRX_C1, -math.pi / 2),
        (-_CRX_C2, 3 * math.pi / 2), (_CRX_C2, -3 * math.pi / 2),
    ),
}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    param: float | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        qubits = tuple(int(q) for q in self.qubits)
        object.__setattr__(self, "qubits", qubits)
        if len(set(qubits)) != len(qubits):
            raise CircuitError("gate qubits must be distinct")
        if self.kind == "fixed-unitary":
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2 ** len(qubits),) * 2:
                raise CircuitError("fixed-unitary matrix does not match its qubit count")
            object.__setattr__(self, "matrix", m)
        else:
            want = 2 if self.kind in TWO_QUBIT_KINDS else 1
            if len(qubits) != want:
                raise CircuitError(f"{self.kind} acts on {want} qubit(s)")
            object.__setattr__(self, "param", float(self.param or 0.0))

    @property
    def parametrized(self) -> bool:
        return self.kind != "fixed-unitary"


def gate_matrices(kind: str, theta: np.ndarray) -> np.ndarray:
    """Batched matrices of a parametrized kind, shape ``theta.shape + (d, d)``."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    if kind == "ry":
        m = np.zeros(theta.shape + (2, 2), dtype=complex)
        m[..., 0, 0] = c
        m[..., 0, 1] = -s
        m[..., 1, 0] = s
        m[..., 1, 1] = c
        return m
    if kind == "rz":
        m = np.zeros(theta.shape + (2, 2), dtype=complex)
        m[..., 0, 0] = np.exp(-0.5j * theta)
        m[..., 1, 1] = np.exp(0.5j * theta)
        return m
    if kind == "crx":
        m = np.zeros(theta.shape + (4, 4), dtype=complex)
        m[..., 0, 0] = 1
        m[..., 1, 1] = 1
        m[..., 2, 2] = c
        m[..., 3, 3] = c
        m[..., 2, 3] = -1j * s
        m[..., 3, 2] = -1j * s
        return m
    if kind in ("xx", "yy", "zz"):
        # exp(-i t P/2) = cos(t/2) I - i sin(t/2) P for the 4x4 Pauli product P
        m = np.zeros(theta.shape + (4, 4), dtype=complex)
        idx = np.arange(4)
        m[..., idx, idx] = c[..., None]
        if kind == "zz":
            m[..., idx, idx] += -1j * s[..., None] * np.array([1, -1, -1, 1])
        else:
            sign = 1.0 if kind == "xx" else -1.0  # YY has -1 on the anti-diagonal corners
            anti = np.array([sign, 1.0, 1.0, sign])
            m[..., idx, 3 - idx] += -1j * s[..., None] * anti
        return m
    raise CircuitError(f"{kind!r} is not a parametrized kind")


def gate_matrix(gate: Gate, theta: float | None = None) -> np.ndarray:
    if gate.kind == "fixed-unitary":
        return gate.matrix
    return gate_matrices(gate.kind, np.array(gate.param if theta is None else theta))


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: tuple[Gate, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise CircuitError("circuit needs at least one qubit")
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if any(q >= self.n or q < 0 for q in g.qubits):
                raise CircuitError(f"gate {g.kind} on {g.qubits} is out of range for n={self.n}")

    @property
    def parameter_index(self) -> list[int]:
        """Gate position of each free parameter slot."""
        return [i for i, g in enumerate(self.gates) if g.parametrized]

    @property
    def num_params(self) -> int:
        return sum(1 for g in self.gates if g.parametrized)

    def initial_params(self) -> np.ndarray:
        return np.array([g.param for g in self.gates if g.parametrized], dtype=float)

    def param_kinds(self) -> list[str]:
        return [g.kind for g in self.gates if g.parametrized]

    def with_params(self, params: Sequence[float]) -> "Circuit":
        params = _check_params(self, params)
        it = iter(params.tolist())
        gates = [Gate(g.kind, g.qubits, next(it)) if g.parametrized else g for g in self.gates]
        return Circuit(self.n, tuple(gates), dict(self.meta))

    def topology(self) -> tuple:
        """Hashable description of the gate layout, excluding parameter values."""
        return (self.n, tuple((g.kind, g.qubits) for g in self.gates))

    # --- serialization --------------------------------------------------

    def to_json(self) -> str:
        gates = []
        for g in self.gates:
            entry = {"kind": g.kind, "qubits": list(g.qubits)}
            if g.parametrized:
                entry["params"] = [g.param]
            else:
                entry["params"] = []
                entry["matrix"] = np.stack([g.matrix.real, g.matrix.imag], -1).tolist()
            gates.append(entry)
        doc = {"format": "circuit", "n": self.n, "qubit_order": "qubit 0 is the most significant bit",
               "gates": gates, "meta": self.meta}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        doc = json.loads(text)
        if doc.get("format", "circuit") != "circuit":
            raise CircuitError("document is not a circuit")
        gates = []
        for entry in doc["gates"]:
            kind = entry["kind"]
            if kind == "fixed-unitary":
                arr = np.asarray(entry["matrix"], dtype=float)
                gates.append(Gate(kind, tuple(entry["qubits"]), matrix=arr[..., 0] + 1j * arr[..., 1]))
            else:
                params = entry.get("params", [0.0])
                if len(params) != 1:
                    raise CircuitError(f"{kind} takes exactly one parameter")
                gates.append(Gate(kind, tuple(entry["qubits"]), float(params[0])))
        return cls(int(doc["n"]), tuple(gates), doc.get("meta", {}))


def _check_params(c: Circuit, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.shape[-1:] != (c.num_params,):
        raise CircuitError(f"expected {c.num_params} parameters, got shape {params.shape}")
    return params


# --- state preparation --------------------------------------------------


def zero_state(n: int) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    return psi


def encode_inputs(x) -> np.ndarray:
    """Product state ``(x) ry(x_i)|0>`` for each feature row of ``x``.

    Accepts a single vector (returns ``2**n`` amplitudes) or a sample matrix
    (returns ``(samples, 2**n)``).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if not np.all(np.isfinite(x)):
        raise CircuitError("input angles must be finite")
    out = np.ones((x.shape[0], 1), dtype=complex)
    for q in range(x.shape[1]):
        site = np.stack([np.cos(x[:, q] / 2), np.sin(x[:, q] / 2)], axis=1)
        out = (out[:, :, None] * site[:, None, :]).reshape(x.shape[0], -1)
    return out[0] if single else out


# --- fused simulation ---------------------------------------------------


@dataclass(frozen=True)
class _Segment:
    qubits: tuple[int, ...]
    gate_ids: tuple[int, ...]


def _segments(c: Circuit) -> list[_Segment]:
    segs: list[_Segment] = []
    cur_q: list[int] = []
    cur_g: list[int] = []
    for i, g in enumerate(c.gates):
        merged = list(dict.fromkeys(cur_q + list(g.qubits)))
        if cur_g and len(merged) <= 2:
            cur_q, cur_g = merged, cur_g + [i]
        else:
            if cur_g:
                segs.append(_Segment(tuple(cur_q), tuple(cur_g)))
            cur_q, cur_g = list(g.qubits), [i]
    if cur_g:
        segs.append(_Segment(tuple(cur_q), tuple(cur_g)))
    return segs


def _embed(m: np.ndarray, gate_qubits: tuple[int, ...], seg_qubits: tuple[int, ...]) -> np.ndarray:
    """Lift batched gate matrices onto the segment's qubit space."""
    k = len(seg_qubits)
    batch = m.shape[:-2]
    if len(gate_qubits) == k:
        if gate_qubits == seg_qubits:
            return m
        # reversed pair: conjugate by SWAP
        return m.reshape(batch + (2, 2, 2, 2)).transpose(
            *range(len(batch)), len(batch) + 1, len(batch), len(batch) + 3, len(batch) + 2
        ).reshape(batch + (4, 4))
    eye = np.eye(2, dtype=complex)
    if seg_qubits.index(gate_qubits[0]) == 0:
        return np.einsum("...ab,cd->...acbd", m, eye).reshape(batch + (4, 4))
    return np.einsum("ab,...cd->...acbd", eye, m).reshape(batch + (4, 4))


class Simulator:
    """Batched evaluator for one circuit topology.

    ``params`` arrays have shape ``(rows, num_params)``; states have shape
    ``(rows, samples, 2**n)`` where ``samples`` indexes input states.
    """

    def __init__(self, circuit: Circuit):
        self.circuit = circuit
        self.n = circuit.n
        self.segments = _segments(circuit)
        slot = {}
        for j, gi in enumerate(circuit.parameter_index):
            slot[gi] = j
        self._slot = slot
        # parameter slot -> segment index
        self.param_segment = np.empty(circuit.num_params, dtype=int)
        for si, seg in enumerate(self.segments):
            for gi in seg.gate_ids:
                if gi in slot:
                    self.param_segment[slot[gi]] = si

    def segment_matrices(self, si: int, params: np.ndarray) -> np.ndarray:
        """Fused matrices of segment ``si`` for each parameter row: ``(rows, d, d)``."""
        seg = self.segments[si]
        rows = params.shape[0]
        d = 2 ** len(seg.qubits)
        out = np.broadcast_to(np.eye(d, dtype=complex), (rows, d, d))
        for gi in seg.gate_ids:
            g = self.circuit.gates[gi]
            if g.parametrized:
                m = gate_matrices(g.kind, params[:, self._slot[gi]])
            else:
                m = np.broadcast_to(g.matrix, (rows,) + g.matrix.shape)
            out = _embed(m, g.qubits, seg.qubits) @ out
        return out

    def apply_segment(self, states: np.ndarray, si: int, mats: np.ndarray) -> np.ndarray:
        """Apply per-row segment matrices ``(rows|1, d, d)`` to ``(rows, samples, 2**n)``."""
        seg = self.segments[si]
        n = self.n
        rows, samples = states.shape[:2]
        t = states.reshape((rows, samples) + (2,) * n)
        axes = [2 + q for q in seg.qubits]
        t = np.moveaxis(t, axes, list(range(2, 2 + len(axes))))
        shape = t.shape
        t = t.reshape(rows, samples, mats.shape[-1], -1)
        t = np.matmul(mats[:, None] if mats.shape[0] == rows else mats[0], t)
        t = t.reshape(shape)
        t = np.moveaxis(t, list(range(2, 2 + len(axes))), axes)
        return np.ascontiguousarray(t).reshape(rows, samples, -1)

    def run(self, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Final states for each parameter row and each input state."""
        params = np.atleast_2d(_check_params(self.circuit, params))
        inputs = np.atleast_2d(np.asarray(inputs, dtype=complex))
        if inputs.shape[-1] != 2**self.n:
            raise CircuitError("input state dimension does not match the circuit")
        states = np.broadcast_to(inputs, (params.shape[0],) + inputs.shape).copy()
        for si in range(len(self.segments)):
            states = self.apply_segment(states, si, self.segment_matrices(si, params))
        return states

    def shifted_measurements(self, params: np.ndarray, inputs: np.ndarray, measure, shifts):
        """Measurements for shifted copies of a single parameter vector.

        ``shifts`` is a list of ``(slot, offset)``; ``measure`` is a measure
        object or a plain ``states -> values`` callable. Each shifted circuit
        is evaluated exactly. Rows sharing a prefix reuse one cached prefix
        state. For all-zeros measures the suffix is folded into the pulled-back
        projector once per segment instead of being re-simulated for every
        shifted row; both routes give the same shifted values.
        Returns one measurement row per shift, in the given order.
        """
        params = np.asarray(params, dtype=float)
        inputs = np.atleast_2d(np.asarray(inputs, dtype=complex))
        by_seg: dict[int, list[int]] = {}
        for r, (slot, _) in enumerate(shifts):
            by_seg.setdefault(int(self.param_segment[slot]), []).append(r)
        base = params[None, :]
        nseg = len(self.segments)
        base_mats = [self.segment_matrices(si, base) for si in range(nseg)]
        suffix = self._pulled_back_projectors(measure, base_mats, sorted(by_seg))
        fn = measure if suffix is None and callable(measure) else getattr(measure, "measure", measure)
        prefix = inputs[None].copy()
        out = [None] * len(shifts)
        for si in range(nseg):
            if si in by_seg:
                rows = by_seg[si]
                p = np.repeat(base, len(rows), axis=0)
                for k, r in enumerate(rows):
                    slot, off = shifts[r]
                    p[k, slot] += off
                states = np.broadcast_to(prefix, (len(rows),) + prefix.shape[1:])
                states = self.apply_segment(states, si, self.segment_matrices(si, p))
                if suffix is None:
                    for sj in range(si + 1, nseg):
                        states = self.apply_segment(states, sj, base_mats[sj])
                    vals = fn(states)
                else:
                    vals = self._folded_measure(measure, states, suffix[si])
                for k, r in enumerate(rows):
                    out[r] = vals[k]
            prefix = self.apply_segment(prefix, si, base_mats[si])
        return np.array(out)

    def _apply_rows(self, x: np.ndarray, si: int, mats: np.ndarray) -> np.ndarray:
        """``x @ U^T`` for a segment operator ``U`` acting on every row of ``x``."""
        return self.apply_segment(x[None], si, mats)[0]

    def _pulled_back_projectors(self, measure, base_mats, needed):
        """All-zeros projector after each needed segment, pulled back through the rest of the circuit.

        Returns ``{segment: conj(v)}`` as ``(1, 2**n)`` rows, or ``None`` when
        the measure is not an all-zeros probability.
        """
        if getattr(measure, "fold", None) != "zeros" or not needed:
            return None
        cur = np.zeros((1, 2**self.n), dtype=complex)
        cur[0, 0] = 1.0
        out = {}
        for sj in range(len(self.segments) - 1, needed[0] - 1, -1):
            if sj in needed:
                out[sj] = cur
            # v -> U^dagger v, stored conjugated: conj(v) -> conj(v) U
            cur = self._apply_rows(cur, sj, base_mats[sj].transpose(0, 2, 1))
        return out

    @staticmethod
    def _folded_measure(measure, states: np.ndarray, obs: np.ndarray) -> np.ndarray:
        return np.abs(states @ obs[0]) ** 2


def run(c: Circuit, params, input_state=None) -> np.ndarray:
    psi = zero_state(c.n) if input_state is None else np.asarray(input_state, dtype=complex)
    return Simulator(c).run(np.asarray(params, dtype=float)[None], psi[None])[0, 0]


def expectation(c: Circuit, params, h: PauliSum) -> float:
    if h.n > c.n:
        raise CircuitError("observable acts on more qubits than the circuit")
    if h.n != c.n:
        h = PauliSum(c.n, h.terms)
    return float(h.expectation(run(c, params)))


def prob_all_zeros(c: Circuit, params, input_state=None) -> float:
    return float(abs(run(c, params, input_state)[0]) ** 2)


# --- objectives ---------------------------------------------------------


class EnergyMeasure:
    """``sign * <H>``; one measured quantity per input."""

    def __init__(self, h: PauliSum, sign: float = 1.0):
        self.h = h
        self.sign = float(sign)

    def measure(self, states: np.ndarray) -> np.ndarray:
        return self.sign * self.h.expectation(states[:, 0, :])[:, None]

    def combine(self, m: np.ndarray) -> float:
        return float(m[0])

    def combine_grad(self, m: np.ndarray) -> np.ndarray:
        return np.ones(1)


class AllZerosMeasure:
    """Probability of the all-zeros outcome for a single input state."""

    fold = "zeros"

    def measure(self, states: np.ndarray) -> np.ndarray:
        return np.abs(states[:, :, 0]) ** 2

    def combine(self, m: np.ndarray) -> float:
        return float(m[0])

    def combine_grad(self, m: np.ndarray) -> np.ndarray:
        return np.ones(1)


def bce(p: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    q = np.clip(p, epsilon, 1 - epsilon)
    return float(np.mean(-(y * np.log(q) + (1 - y) * np.log(1 - q))))


def bce_grad(p: np.ndarray, y: np.ndarray, epsilon: float) -> np.ndarray:
    """Derivative of the mean BCE with respect to each unclamped probability."""
    q = np.clip(p, epsilon, 1 - epsilon)
    g = (-y / q + (1 - y) / (1 - q)) / len(p)
    g[(p < epsilon) | (p > 1 - epsilon)] = 0.0
    return g


class BCEMeasure:
    """Mean binary cross-entropy of all-zeros probabilities over labelled inputs."""

    fold = "zeros"

    def __init__(self, labels, epsilon: float = 1e-7):
        self.labels = np.asarray(labels, dtype=float)
        self.epsilon = epsilon

    def measure(self, states: np.ndarray) -> np.ndarray:
        return np.abs(states[:, :, 0]) ** 2

    def combine(self, m: np.ndarray) -> float:
        return bce(m, self.labels, self.epsilon)

    def combine_grad(self, m: np.ndarray) -> np.ndarray:
        return bce_grad(m, self.labels, self.epsilon)


class CircuitObjective:
    """Objective ``params -> combine(measure(circuit(params) inputs))`` with exact gradients.

    Gradients use parameter-shift rules on the (linear) measured quantities
    and the chain rule through ``combine``. ``value_evals`` counts objective
    calls; ``gradient_evals`` counts shifted circuit evaluations.
    """

    def __init__(self, circuit: Circuit, measure, inputs=None):
        self.circuit = circuit
        self.sim = Simulator(circuit)
        self.measure = measure
        self.inputs = np.atleast_2d(zero_state(circuit.n) if inputs is None else np.asarray(inputs, dtype=complex))
        self.value_evals = 0
        self.gradient_evals = 0
        kinds = circuit.param_kinds()
        self._rules = [SHIFT_RULES["four-term" if k == "crx" else "two-term"] for k in kinds]

    @property
    def evaluations(self) -> int:
        return self.value_evals + self.gradient_evals

    def measurements(self, params) -> np.ndarray:
        params = _check_params(self.circuit, params)
        self.value_evals += 1
        states = self.sim.run(params[None], self.inputs)
        return self.measure.measure(states)[0]

    def value(self, params) -> float:
        return self.measure.combine(self.measurements(params))

    def gradient(self, params) -> np.ndarray:
        params = _check_params(self.circuit, params)
        m0 = self.measurements(params)
        self.value_evals -= 1  # base measurements only feed the chain rule
        self.gradient_evals += 1
        weights = self.measure.combine_grad(m0)
        shifts, coeffs, owners = [], [], []
        for slot, rule in enumerate(self._rules):
            for coeff, off in rule:
                shifts.append((slot, off))
                coeffs.append(coeff)
                owners.append(slot)
        if not shifts:
            return np.zeros(0)
        vals = self.sim.shifted_measurements(params, self.inputs, self.measure, shifts)
        self.gradient_evals += len(shifts)
        contrib = np.asarray(coeffs) * (vals @ weights)
        grad = np.zeros(self.circuit.num_params)
        np.add.at(grad, np.asarray(owners), contrib)
        return grad


# --- brick-wall building blocks -----------------------------------------

KAK_BLOCK_SIZE = 15
RY_CRX_BLOCK_SIZE = 6


def kak_block(a: int, b: int, angles: Sequence[float] | None = None) -> list[Gate]:
    """Fifteen-parameter block: Z-Y-Z on each qubit, XX/YY/ZZ, Z-Y-Z on each qubit."""
    angles = [0.0] * KAK_BLOCK_SIZE if angles is None else list(angles)
    if len(angles) != KAK_BLOCK_SIZE:
        raise CircuitError("a KAK block takes 15 angles")
    gates = []
    order = (("rz", a), ("ry", a), ("rz", a), ("rz", b), ("ry", b), ("rz", b))
    for (kind, q), t in zip(order, angles[:6]):
        gates.append(Gate(kind, (q,), t))
    for kind, t in zip(("xx", "yy", "zz"), angles[6:9]):
        gates.append(Gate(kind, (a, b), t))
    for (kind, q), t in zip(order, angles[9:]):
        gates.append(Gate(kind, (q,), t))
    return gates


def ry_crx_block(a: int, b: int, angles: Sequence[float] | None = None) -> list[Gate]:
    """Six-parameter block of Y rotations and controlled X rotations both ways."""
    angles = [0.0] * RY_CRX_BLOCK_SIZE if angles is None else list(angles)
    if len(angles) != RY_CRX_BLOCK_SIZE:
        raise CircuitError("a ry-crx block takes 6 angles")
    return [
        Gate("ry", (a,), angles[0]), Gate("ry", (b,), angles[1]), Gate("crx", (a, b), angles[2]),
        Gate("ry", (a,), angles[3]), Gate("ry", (b,), angles[4]), Gate("crx", (b, a), angles[5]),
    ]


def circuit_unitary(c: Circuit, params=None) -> np.ndarray:
    """Dense unitary by multiplying full-size gate matrices (test oracle, small n)."""
    if c.n > 10:
        raise CircuitError("dense unitaries are limited to 10 qubits")
    params = c.initial_params() if params is None else _check_params(c, params)
    it = iter(params)
    u = np.eye(2**c.n, dtype=complex)
    for g in c.gates:
        m = gate_matrix(g, next(it) if g.parametrized else None)
        u = full_operator(m, g.qubits, c.n) @ u
    return u


def full_operator(m: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Embed a gate matrix into the full ``2**n`` space by explicit index mapping."""
    k = len(qubits)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> (n - 1 - q)) & 1 for q in range(n)]
        sub_in = 0
        for q in qubits:
            sub_in = 2 * sub_in + bits[q]
        for sub_out in range(2**k):
            amp = m[sub_out, sub_in]
            if amp == 0:
                continue
            nb = list(bits)
            for j, q in enumerate(qubits):
                nb[q] = (sub_out >> (k - 1 - j)) & 1
            row = 0
            for b in nb:
                row = 2 * row + b
            out[row, col] += amp
    return out
