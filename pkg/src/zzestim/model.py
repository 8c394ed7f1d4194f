"""Operators and Liouvillians of the dissipative ZZ-coupled qubit pair.

Basis convention: ``|0> = |e>`` (excited) and ``|1> = |f>`` (ground) on each
qubit, ordered (qubit 1, qubit 2).  With this choice ``sigma_z = diag(1, -1)``
and the lowering operator has its single nonzero entry at ``[1, 0]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .qcore import dagger, is_hermitian, kron, NotHermitian

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)
SP = SM.conj().T
for _m in (I2, I4, SX, SY, SZ, SM, SP):
    _m.setflags(write=False)

ZZ = kron(SZ, SZ)
ZZ.setflags(write=False)

# control generators, ordered (x1, y1, z1, x2, y2, z2)
CONTROL_OPS = tuple(kron(s, I2) for s in (SX, SY, SZ)) + tuple(kron(I2, s) for s in (SX, SY, SZ))
LOWERING = (kron(SM, I2), kron(I2, SM))

Channels = Literal["both", "first"]


def pauli_ops():
    """Return ``(sigma_x, sigma_y, sigma_z, sigma_minus, sigma_plus)``."""
    return SX, SY, SZ, SM, SP


@dataclass(frozen=True)
class SystemParams:
    omega1: float = 1.0
    omega2: float = 1.0
    g: float = 0.1
    gamma1: float = 0.05
    gamma2: float = 0.05

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValueError("decay rates must be nonnegative")
        for name in ("omega1", "omega2", "g", "gamma1", "gamma2"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_g(self, g: float) -> "SystemParams":
        return SystemParams(self.omega1, self.omega2, g, self.gamma1, self.gamma2)


@dataclass(frozen=True)
class FeedbackConfig:
    lam: float = math.pi / 2
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= math.pi:
            raise ValueError(f"feedback strength {self.lam} outside [0, pi]")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"detection efficiency {self.eta} outside [0, 1]")


@dataclass(frozen=True)
class EvolutionMode:
    """Which master equation to integrate.

    ``tag`` is ``"free"``, ``"feedback"`` or ``"imperfect"``.  ``channels`` says
    which decay channels trigger the feedback unitary; it defaults to
    ``"both"`` for perfect feedback and ``"first"`` for imperfect detection.
    """

    tag: Literal["free", "feedback", "imperfect"] = "free"
    config: FeedbackConfig = field(default_factory=FeedbackConfig)
    channels: Channels | None = None

    def __post_init__(self):
        if self.tag not in ("free", "feedback", "imperfect"):
            raise ValueError(f"unknown evolution mode {self.tag!r}")
        if self.channels is None:
            object.__setattr__(self, "channels", "both" if self.tag == "feedback" else "first")
        if self.channels not in ("both", "first"):
            raise ValueError(f"unknown feedback channel set {self.channels!r}")

    @property
    def eta(self) -> float:
        if self.tag == "free":
            return 0.0
        if self.tag == "feedback":
            return 1.0
        return self.config.eta

    @classmethod
    def free(cls) -> "EvolutionMode":
        return cls("free")

    @classmethod
    def feedback(cls, lam: float = math.pi / 2, channels: Channels = "both") -> "EvolutionMode":
        return cls("feedback", FeedbackConfig(lam, 1.0), channels)

    @classmethod
    def imperfect(cls, lam: float = math.pi / 2, eta: float = 1.0,
                  channels: Channels = "first") -> "EvolutionMode":
        return cls("imperfect", FeedbackConfig(lam, eta), channels)


def build_h0(p: SystemParams) -> np.ndarray:
    return (p.omega1 * kron(SZ, I2) + p.omega2 * kron(I2, SZ) + p.g * ZZ)


def build_hc(u) -> np.ndarray:
    u = np.asarray(u, dtype=float).reshape(6)
    if not np.all(np.isfinite(u)):
        raise ValueError("control amplitudes must be finite")
    return np.tensordot(u, np.asarray(CONTROL_OPS), axes=1)


def feedback_unitary(lam: float) -> np.ndarray:
    """``exp(i lam sigma_x)`` on qubit 1, identity on qubit 2."""
    return kron(math.cos(lam) * I2 + 1j * math.sin(lam) * SX, I2)


def jump_measurement_ops(H: np.ndarray, gamma: float, k: int, dt: float,
                         gammas: tuple[float, float] | None = None):
    """Kraus pair ``(Omega0, Omega1)`` for one time step of length ``dt``.

    ``Omega1`` is the photodetection of qubit ``k`` (1 or 2).  ``Omega0`` is the
    no-click operator and carries the anti-Hermitian damping of both channels,
    at rates ``gammas`` (defaults to ``gamma`` on both).
    """
    if k not in (1, 2):
        raise ValueError("qubit index must be 1 or 2")
    if gammas is None:
        gammas = (gamma, gamma)
    damping = sum(gk * dagger(c) @ c for gk, c in zip(gammas, LOWERING))
    omega0 = I4 - (1j * H + 0.5 * damping) * dt
    omega1 = math.sqrt(gamma * dt) * LOWERING[k - 1]
    return omega0, omega1


# superoperator building blocks (column stacking)

def left(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a @ rho``."""
    return kron(np.eye(a.shape[0]), a)


def right(b: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> rho @ b``."""
    return kron(b.T, np.eye(b.shape[0]))


def commutator_super(h: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> -i [h, rho]``."""
    return -1j * (left(h) - right(h))


def sandwich_super(c: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> c rho c^dagger``."""
    return kron(c.conj(), c)


def dissipator_super(c: np.ndarray) -> np.ndarray:
    cdc = dagger(c) @ c
    return sandwich_super(c) - 0.5 * (left(cdc) + right(cdc))


def _dressed_channels(mode: EvolutionMode) -> tuple[bool, bool]:
    if mode.tag == "free":
        return (False, False)
    return (True, mode.channels == "both")


def feedback_dissipator(p: SystemParams, U: np.ndarray, eta: float,
                        dressed: tuple[bool, bool]) -> np.ndarray:
    """Decay part of the generator with jumps on the ``dressed`` channels followed by ``U``.

    ``U`` is not restricted to the ``exp(i lam sigma_x)`` family, which lets
    callers probe feedback strengths outside ``[0, pi]``.
    """
    out = np.zeros((16, 16), dtype=complex)
    for gk, c, d in zip((p.gamma1, p.gamma2), LOWERING, dressed):
        if gk == 0.0:
            continue
        if d:
            out += gk * (eta * dissipator_super(U @ c) + (1.0 - eta) * dissipator_super(c))
        else:
            out += gk * dissipator_super(c)
    return out


def dissipative_super(p: SystemParams, mode: EvolutionMode) -> np.ndarray:
    """Hamiltonian-free part of the generator for ``mode``."""
    U = feedback_unitary(mode.config.lam) if mode.tag != "free" else I4
    return feedback_dissipator(p, U, mode.eta, _dressed_channels(mode))


def build_liouvillian(p: SystemParams, Hc: np.ndarray | None, mode: EvolutionMode) -> np.ndarray:
    """16x16 generator with ``d vec(rho)/dt = L @ vec(rho)``."""
    H = build_h0(p)
    if Hc is not None:
        if not is_hermitian(Hc):
            raise NotHermitian("control Hamiltonian is not Hermitian")
        H = H + Hc
    return commutator_super(H) + dissipative_super(p, mode)


def coupling_derivative_super() -> np.ndarray:
    """Derivative of the generator with respect to the coupling ``g``."""
    return commutator_super(ZZ)


def control_derivative_supers() -> tuple[np.ndarray, ...]:
    return tuple(commutator_super(op) for op in CONTROL_OPS)
