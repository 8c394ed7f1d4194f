"""Quantum and classical Fisher information for the coupling parameter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ZZ, SystemParams
from .qcore import (HERMITIAN_TOL, HermitianEigen, hermitian_eig, hermitize, is_hermitian,
                    pure_state)

SUPPORT_CUTOFF = 1e-12
PROB_FLOOR = 1e-12


class DegenerateSupport(ValueError):
    pass


class SingularOutcome(ValueError):
    pass


@dataclass(frozen=True)
class SLDOperator:
    matrix: np.ndarray
    basis_eigen: HermitianEigen


@dataclass(frozen=True)
class MeasurementSet:
    """A POVM given by its elements; validated on construction."""

    elements: tuple

    def __post_init__(self):
        els = tuple(np.array(m, dtype=complex) for m in self.elements)
        if not els:
            raise ValueError("a POVM needs at least one element")
        dim = els[0].shape[0]
        for m in els:
            m.setflags(write=False)
            if not is_hermitian(m, HERMITIAN_TOL):
                raise ValueError("POVM element is not Hermitian")
            if np.linalg.eigvalsh(hermitize(m))[0] < -HERMITIAN_TOL:
                raise ValueError("POVM element is not positive semidefinite")
        if np.max(np.abs(sum(els) - np.eye(dim))) > HERMITIAN_TOL:
            raise ValueError("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", els)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    @property
    def stacked(self) -> np.ndarray:
        return np.stack(self.elements)


def _eigen_frame(rho, drho):
    eig = hermitian_eig(hermitize(np.asarray(rho, dtype=complex)), tol=1e-8)
    lam = eig.values
    V = eig.vectors
    d = V.conj().T @ np.asarray(drho, dtype=complex) @ V
    denom = lam[:, None] + lam[None, :]
    mask = denom > SUPPORT_CUTOFF
    if not mask.any():
        raise DegenerateSupport("state has no support above the cutoff")
    return lam, V, d, denom, mask


def compute_sld(rho, drho) -> SLDOperator:
    """Symmetric logarithmic derivative, zero off the support of ``rho``."""
    lam, V, d, denom, mask = _eigen_frame(rho, drho)
    Lt = np.where(mask, 2.0 * d / np.where(mask, denom, 1.0), 0.0)
    L = hermitize(V @ Lt @ V.conj().T)
    return SLDOperator(L, hermitian_eig(L))


def qfi(rho, drho) -> float:
    """``Tr[rho L^2]`` evaluated in the eigenbasis of ``rho``."""
    lam, V, d, denom, mask = _eigen_frame(rho, drho)
    val = np.sum(np.where(mask, 2.0 * np.abs(d) ** 2 / np.where(mask, denom, 1.0), 0.0))
    return max(float(val), 0.0)


def qfi_trace_form(rho, drho) -> float:
    L = compute_sld(rho, drho).matrix
    return float(np.trace(np.asarray(rho) @ L @ L).real)


def sld_residual(rho, drho, L) -> float:
    """Max defining-equation residual restricted to the support of ``rho``."""
    lam, V, d, denom, mask = _eigen_frame(rho, drho)
    r = np.asarray(drho) - 0.5 * (L @ rho + rho @ L)
    rt = V.conj().T @ r @ V
    return float(np.max(np.abs(np.where(mask, rt, 0.0))))


def cfi(rho, drho, povm: MeasurementSet) -> float:
    rho = np.asarray(rho)
    drho = np.asarray(drho)
    total = 0.0
    for m in povm:
        p = float(np.trace(rho @ m).real)
        dp = float(np.trace(drho @ m).real)
        if p > PROB_FLOOR:
            total += dp * dp / p
        elif abs(dp) > 1e-9:
            raise SingularOutcome(f"outcome with probability {p:.2e} has slope {dp:.2e}")
    return total


def optimal_povm_from_sld(L: SLDOperator) -> MeasurementSet:
    V = L.basis_eigen.vectors
    return MeasurementSet(tuple(np.outer(V[:, k], V[:, k].conj()) for k in range(V.shape[1])))


def pure_state_qfi(psi0, p: SystemParams | None, T: float) -> float:
    """Noiseless QFI of the coupling after time ``T``: ``4 T^2 (1 - <ZZ>^2)``."""
    psi = pure_state(psi0)
    zz = float(np.vdot(psi, ZZ @ psi).real)
    return 4.0 * T * T * (1.0 - zz * zz)


def optimal_probe() -> np.ndarray:
    """|++>, which zeroes ``<ZZ>`` and so maximizes the noiseless QFI."""
    return pure_state(np.full(4, 0.5))
