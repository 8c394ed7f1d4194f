"""Dense linear-algebra primitives and validated state types.

Everything here works on plain ``numpy`` arrays.  Matrices handed out by the
constructors below are marked read-only so they can be shared freely.

Vectorization convention is column stacking throughout the package::

    vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8
PURE_NORM_TOL = 1e-12


class NotHermitian(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class InvalidState(ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def complex_matrix(entries, dim: int | None = None) -> np.ndarray:
    """Return a read-only square complex matrix, rejecting NaN/Inf."""
    a = np.asarray(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise DimensionMismatch(f"expected dim {dim}, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return _frozen(a)


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol)


def hermitize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product ``(A x B)[i*nB + k, j*nB + l] = A[i, j] * B[k, l]``."""
    return np.kron(a, b)


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a square matrix into a vector."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"cannot vectorize array of shape {rho.shape}")
    return rho.reshape(-1, order="F").copy()


def unvectorize(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    n = int(round(np.sqrt(v.size)))
    if v.ndim != 1 or n * n != v.size:
        raise DimensionMismatch(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape((n, n), order="F").copy()


def mat_exp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximants)."""
    a = np.asarray(a, dtype=complex)
    if not np.any(a):
        return np.eye(a.shape[0], dtype=complex)
    return la.expm(a)


@dataclass(frozen=True)
class HermitianEigen:
    """Eigenpairs of a Hermitian matrix; ``vectors[:, k]`` pairs with ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def _fix_phases(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first non-negligible component of each column made real positive
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size:
            z = col[idx[0]]
            out[:, k] = col * (abs(z) / z)
    return out


def hermitian_eig(a: np.ndarray, tol: float = HERMITIAN_TOL) -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix with ascending eigenvalues.

    Eigenvector phases are fixed so that the first non-negligible component of
    each vector is real and positive, which makes the output reproducible.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not is_hermitian(a, tol):
        raise NotHermitian(f"asymmetry {np.max(np.abs(a - a.conj().T)):.3e} exceeds {tol:g}")
    values, vectors = np.linalg.eigh(hermitize(a))
    vectors = _fix_phases(vectors)
    values.setflags(write=False)
    vectors.setflags(write=False)
    return HermitianEigen(values, vectors)


def pure_state(amplitudes) -> np.ndarray:
    """Validated two-qubit pure state in the |00>, |01>, |10>, |11> basis."""
    psi = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if psi.size != 4:
        raise DimensionMismatch(f"expected 4 amplitudes, got {psi.size}")
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > PURE_NORM_TOL:
        raise InvalidState(f"squared norm {norm2!r} differs from 1")
    return _frozen(psi)


def check_density(rho: np.ndarray) -> None:
    """Raise :class:`InvalidState` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise DimensionMismatch(f"density matrix must be 4x4, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidState("density matrix has non-finite entries")
    if not is_hermitian(rho):
        raise InvalidState("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvalidState(f"trace {tr} differs from 1")
    lmin = np.linalg.eigvalsh(hermitize(rho))[0]
    if lmin < -POSITIVITY_TOL:
        raise InvalidState(f"minimum eigenvalue {lmin:.3e} is negative")


def density_matrix(entries) -> np.ndarray:
    """Hermitize, validate and freeze a 4x4 density matrix."""
    rho = hermitize(np.asarray(entries, dtype=complex))
    check_density(rho)
    return _frozen(rho)


def projector(psi) -> np.ndarray:
    psi = pure_state(psi)
    return density_matrix(np.outer(psi, psi.conj()))
