"""Piecewise-constant propagation of density matrices and their g-sensitivity."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import (EvolutionMode, SystemParams, build_hc, build_liouvillian,
                    coupling_derivative_super)
from .qcore import (InvalidState, check_density, hermitize, mat_exp, unvectorize,
                    vectorize)


@dataclass(frozen=True)
class TimeGrid:
    T: float = 80.0
    M: int = 100

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("total time must be positive")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("segment count must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray                 # (M+1, 4, 4)
    sensitivities: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def zero_controls(M: int) -> np.ndarray:
    return np.zeros((M, 6))


def _as_controls(controls, M: int) -> np.ndarray:
    if controls is None:
        return zero_controls(M)
    u = np.asarray(controls, dtype=float)
    if u.shape != (M, 6):
        raise ValueError(f"controls must have shape ({M}, 6), got {u.shape}")
    return u


def segment_generators(p: SystemParams, controls, mode: EvolutionMode) -> list[np.ndarray]:
    """One 16x16 generator per segment; identical control rows share an object."""
    cache: dict[bytes, np.ndarray] = {}
    out = []
    for row in controls:
        key = row.tobytes()
        if key not in cache:
            Hc = build_hc(row) if np.any(row) else None
            cache[key] = build_liouvillian(p, Hc, mode)
        out.append(cache[key])
    return out


def _exp_cached(gens: Sequence[np.ndarray], scale: float, build=None) -> list[np.ndarray]:
    memo: dict[int, np.ndarray] = {}
    props = []
    for G in gens:
        key = id(G)
        if key not in memo:
            memo[key] = mat_exp(scale * (build(G) if build else G))
        props.append(memo[key])
    return props


def _validated(rho: np.ndarray, n: int) -> np.ndarray:
    rho = hermitize(rho)
    try:
        check_density(rho)
    except InvalidState as exc:
        raise InvalidState(f"segment {n}: {exc}") from None
    return rho


def propagate(rho0, p: SystemParams, controls, mode: EvolutionMode, grid: TimeGrid,
              validate: bool = True) -> Trajectory:
    """Evolve ``rho0`` through ``grid.M`` segments of exact exponential propagation."""
    u = _as_controls(controls, grid.M)
    props = _exp_cached(segment_generators(p, u, mode), grid.dt)
    rho = np.asarray(rho0, dtype=complex)
    if validate:
        rho = _validated(rho, 0)
    states = np.empty((grid.M + 1, 4, 4), dtype=complex)
    states[0] = rho
    v = vectorize(rho)
    for n, P in enumerate(props, start=1):
        v = P @ v
        rho = unvectorize(v)
        if validate:
            rho = _validated(rho, n)
            v = vectorize(rho)
        states[n] = rho
    return Trajectory(grid.times, states)


def augmented_generator(G: np.ndarray, dG: np.ndarray) -> np.ndarray:
    """Generator of the pair ``(rho, d rho/dg)``: ``[[G, 0], [dG, G]]``."""
    n = G.shape[0]
    A = np.zeros((2 * n, 2 * n), dtype=complex)
    A[:n, :n] = G
    A[n:, n:] = G
    A[n:, :n] = dG
    return A


def augmented_propagators(p: SystemParams, controls, mode: EvolutionMode, grid: TimeGrid,
                          dG: np.ndarray | None = None) -> list[np.ndarray]:
    u = _as_controls(controls, grid.M)
    if dG is None:
        dG = coupling_derivative_super()
    return _exp_cached(segment_generators(p, u, mode), grid.dt,
                       build=lambda G: augmented_generator(G, dG))


def propagate_with_sensitivity(rho0, p: SystemParams, controls, mode: EvolutionMode,
                               grid: TimeGrid, validate: bool = True,
                               dG: np.ndarray | None = None) -> Trajectory:
    """Like :func:`propagate` but also carries ``d rho / d g`` (zero at t=0).

    ``dG`` overrides the generator derivative; pass a zero matrix to model a
    g-independent generator.
    """
    props = augmented_propagators(p, controls, mode, grid, dG)
    rho = np.asarray(rho0, dtype=complex)
    if validate:
        rho = _validated(rho, 0)
    states = np.empty((grid.M + 1, 4, 4), dtype=complex)
    sens = np.empty((grid.M + 1, 4, 4), dtype=complex)
    states[0] = rho
    sens[0] = 0.0
    x = np.concatenate([vectorize(rho), np.zeros(16, dtype=complex)])
    for n, P in enumerate(props, start=1):
        x = P @ x
        rho = unvectorize(x[:16])
        s = hermitize(unvectorize(x[16:]))
        if validate:
            rho = _validated(rho, n)
            if abs(np.trace(s)) > 1e-10:
                raise InvalidState(f"segment {n}: sensitivity trace {np.trace(s):.3e}")
            x = np.concatenate([vectorize(rho), vectorize(s)])
        states[n] = rho
        sens[n] = s
    return Trajectory(grid.times, states, sens)


def final_state_and_sensitivity(rho0, p: SystemParams, controls, mode: EvolutionMode,
                                grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """``(rho(T), d rho(T)/dg)`` without storing or validating intermediate states."""
    props = augmented_propagators(p, controls, mode, grid)
    x = np.concatenate([vectorize(np.asarray(rho0, dtype=complex)), np.zeros(16, dtype=complex)])
    for P in props:
        x = P @ x
    return hermitize(unvectorize(x[:16])), hermitize(unvectorize(x[16:]))
