"""Closed-form free evolution of |++><++| under local spontaneous emission.

Only the entries with simple closed forms are provided; the remaining ones
(rho_24, rho_34 and their conjugates) are masked out and must be taken from
the numerical propagator.
"""
from __future__ import annotations

import numpy as np

from .model import SystemParams

# (row, col) pairs in 0-based indexing covered by analytic_free_rho
IMPLEMENTED = ((0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (2, 2), (3, 3))


def analytic_free_rho(t: float, p: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(rho, mask)`` at time ``t``; ``mask`` flags the valid entries."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    g1, g2 = p.gamma1, p.gamma2
    w1, w2, g = p.omega1, p.omega2, p.g
    both = np.exp(-(g1 + g2) * t)

    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = 0.25 * both
    rho[0, 1] = 0.25 * np.exp(-(g1 + 0.5 * g2) * t - 2j * (w2 + g) * t)
    rho[0, 2] = 0.25 * np.exp(-(0.5 * g1 + g2) * t - 2j * (w1 + g) * t)
    rho[0, 3] = 0.25 * np.exp(-0.5 * (g1 + g2) * t - 2j * (w1 + w2) * t)
    rho[1, 1] = 0.5 * np.exp(-g1 * t) - 0.25 * both
    rho[1, 2] = 0.25 * np.exp(-0.5 * (g1 + g2) * t - 2j * (w1 - w2) * t)
    rho[2, 2] = 0.5 * np.exp(-g2 * t) - 0.25 * both
    rho[3, 3] = 0.25 * both - 0.5 * np.exp(-g1 * t) - 0.5 * np.exp(-g2 * t) + 1.0

    mask = np.zeros((4, 4), dtype=bool)
    for i, j in IMPLEMENTED:
        mask[i, j] = mask[j, i] = True
        if i != j:
            rho[j, i] = np.conj(rho[i, j])
    return rho, mask
