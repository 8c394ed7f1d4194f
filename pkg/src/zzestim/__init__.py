"""Estimation of the ZZ coupling of a dissipative two-qubit system.

Open-system propagation with optional quantum-jump feedback and optimized
Hamiltonian control, Fisher-information analysis, and a batch adaptive
Bayesian recovery protocol.
"""
__version__ = "0.1.0"

from .dynamics import TimeGrid, propagate, propagate_with_sensitivity
from .fisher import cfi, compute_sld, qfi
from .model import EvolutionMode, FeedbackConfig, SystemParams

__all__ = [
    "EvolutionMode", "FeedbackConfig", "SystemParams", "TimeGrid",
    "cfi", "compute_sld", "propagate", "propagate_with_sensitivity", "qfi",
]
