"""Compilation of canonical MPS into parametrized brick-wall circuits."""

from .approx import TwoDiagonalGates, approx_compile_chi4
from .brickwall import OFFDIAG_KINDS, bare_staircase_circuit, build_brickwall, init_brickwall, required_depth
from .kak import KAKAngles, in_weyl_chamber, kak_decompose, kak_reconstruct
from .staircase import (
    BondTooLargeError,
    CompiledStaircase,
    CompileError,
    PlacedGate,
    chi4_block_unitaries,
    embed_isometry,
    mps_to_staircase,
    staircase_fidelity,
    staircase_state,
    state_fidelity,
)

__all__ = [
    "BondTooLargeError",
    "CompileError",
    "CompiledStaircase",
    "KAKAngles",
    "OFFDIAG_KINDS",
    "PlacedGate",
    "TwoDiagonalGates",
    "approx_compile_chi4",
    "bare_staircase_circuit",
    "build_brickwall",
    "chi4_block_unitaries",
    "embed_isometry",
    "in_weyl_chamber",
    "init_brickwall",
    "kak_decompose",
    "kak_reconstruct",
    "mps_to_staircase",
    "required_depth",
    "staircase_fidelity",
    "staircase_state",
    "state_fidelity",
]
