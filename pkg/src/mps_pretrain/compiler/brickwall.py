"""Brick-wall circuits initialized from compiled MPS gates.

Layer ``t`` holds nearest-neighbour blocks on pairs ``(i, i+1)`` with a fixed
parity of ``i + t``. Compiled gates become full fifteen-angle KAK blocks at
their (layer, pair) positions; every other block gets zero angles, which
makes it the identity, so the initial circuit prepares exactly the compiled
state.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..circuit import KAK_BLOCK_SIZE, RY_CRX_BLOCK_SIZE, Circuit, kak_block, ry_crx_block
from .approx import TwoDiagonalGates
from .kak import kak_decompose
from .staircase import CompiledStaircase, CompileError, PlacedGate

OFFDIAG_KINDS = ("full-KAK", "ry-crx")


def brickwall_pairs(n: int, depth: int, parity: int) -> list[tuple[int, int]]:
    """``(layer, pair)`` slots with ``(pair + layer) % 2 == parity``."""
    return [(t, i) for t in range(depth) for i in range(n - 1) if (i + t) % 2 == parity]


def layout_parity(n: int, adjoint: bool) -> int:
    # preparation order puts pair i at layer n-2-i; the adjoint at layer i
    return 0 if adjoint else n % 2


def required_depth(n: int) -> int:
    return n - 1


def build_brickwall(
    n: int,
    depth: int,
    offdiag_kind: str,
    placed: Sequence[PlacedGate] = (),
    parity: int | None = None,
    adjoint: bool = False,
) -> Circuit:
    """Brick-wall circuit with KAK blocks at ``placed`` positions and zero-angle blocks elsewhere.

    Positions listed in ``placed`` always use KAK blocks, even when their
    unitary is the identity, so every arm of a comparison shares one
    topology.
    """
    if offdiag_kind not in OFFDIAG_KINDS:
        raise CompileError(f"offdiag_kind must be one of {OFFDIAG_KINDS}")
    if n < 2:
        raise CompileError("brick-wall circuits need at least two qubits")
    if depth < 1:
        raise CompileError("depth must be >= 1")
    parity = layout_parity(n, adjoint) if parity is None else parity
    slots = brickwall_pairs(n, depth, parity)
    slot_set = set(slots)
    compiled = {}
    for p in placed:
        if (p.layer, p.pair) not in slot_set:
            raise CompileError(
                f"compiled gate at layer {p.layer}, pair {p.pair} does not fit a depth-{depth} brick wall"
            )
        compiled[(p.layer, p.pair)] = p.unitary
    gates = []
    blocks = []
    offset = 0
    for t, i in slots:
        if (t, i) in compiled:
            angles = kak_decompose(compiled[(t, i)]).rotation_angles()
            gates += kak_block(i, i + 1, angles)
            kind, size, role = "full-KAK", KAK_BLOCK_SIZE, "compiled"
        elif offdiag_kind == "full-KAK":
            gates += kak_block(i, i + 1)
            kind, size, role = "full-KAK", KAK_BLOCK_SIZE, "padding"
        else:
            gates += ry_crx_block(i, i + 1)
            kind, size, role = "ry-crx", RY_CRX_BLOCK_SIZE, "padding"
        blocks.append({"layer": t, "pair": i, "kind": kind, "role": role, "offset": offset, "size": size})
        offset += size
    meta = {"depth": depth, "parity": parity, "adjoint": adjoint, "offdiag_kind": offdiag_kind, "blocks": blocks}
    return Circuit(n, tuple(gates), meta)


def init_brickwall(
    diag: CompiledStaircase | TwoDiagonalGates,
    depth: int,
    offdiag_kind: str = "full-KAK",
) -> Circuit:
    """Identity-padded brick wall carrying the compiled diagonal(s).

    ``diag`` is either an exact staircase or a fitted two-diagonal gate set;
    its ``adjoint`` flag selects the layout convention.
    """
    n = diag.n
    need = required_depth(n)
    if depth < need:
        raise CompileError(f"depth {depth} is below the {need} layers the compiled diagonal needs")
    return build_brickwall(n, depth, offdiag_kind, diag.placed_gates(), adjoint=diag.adjoint)


def zero_angle_params(c: Circuit) -> np.ndarray:
    return np.zeros(c.num_params)


def bare_staircase_circuit(diag: CompiledStaircase | TwoDiagonalGates) -> Circuit:
    """The compiled gates alone, as KAK rotation blocks in layer order, without padding."""
    gates = []
    for p in sorted(diag.placed_gates(), key=lambda p: (p.layer, p.pair)):
        gates += kak_block(p.pair, p.pair + 1, kak_decompose(p.unitary).rotation_angles())
    return Circuit(diag.n, tuple(gates))
