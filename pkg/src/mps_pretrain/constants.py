"""Numerical tolerances shared across the package."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    atol: float = 1e-10
    svd_cutoff: float = 1e-12
    hermitian_atol: float = 1e-10
    isometry_atol: float = 1e-8
    unitary_atol: float = 1e-8
    dense_qubit_cap: int = 14


TOL = Tolerances()
