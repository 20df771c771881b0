"""Matrix product state pretraining for parametrized quantum circuits.

Classical tensor-network training (TEBD, DMRG, MPS classifiers) produces a
low-bond-dimension state, which is compiled into the starting angles of a
brick-wall circuit that is then trained on a state-vector simulator.
"""

from __future__ import annotations

from .circuit import Circuit, CircuitObjective, Gate
from .mps import MPS
from .optimize import OptimizerConfig, minimize
from .runner import ComparisonReport, ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "CircuitObjective",
    "ComparisonReport",
    "ExperimentConfig",
    "Gate",
    "MPS",
    "OptimizerConfig",
    "minimize",
    "run_experiment",
]
