"""Gradient ascent of the final-time QFI over piecewise-constant controls.

Three gradient routes are available:

``"surrogate"`` (alias ``"adjoint"``)
    Back-propagates a frozen ``L(T)^2`` (SLD of the final state) through the
    segment adjoints, i.e. the gradient of ``Tr[rho(T) L_fix^2]``.  Ignores how
    ``L(T)`` itself depends on the controls.
``"exact"``
    Adjoint method on the augmented pair ``(rho, d rho/dg)`` using
    ``dF = 2 Tr[L d(d rho/dg)] - Tr[L^2 d rho]``.
``"finite_difference"``
    Central differences of the objective, one control entry at a time.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.linalg import expm_frechet

from .dynamics import (TimeGrid, augmented_generator, final_state_and_sensitivity,
                       segment_generators)
from .fisher import compute_sld, qfi
from .model import (EvolutionMode, SystemParams, control_derivative_supers,
                    coupling_derivative_super)
from .qcore import hermitize, mat_exp, unvectorize, vectorize

log = logging.getLogger(__name__)

GradientMethod = Literal["surrogate", "adjoint", "exact", "finite_difference"]
StepRule = Literal["normalized", "raw"]
FD_STEP = 1e-6


@dataclass(frozen=True)
class GrapeConfig:
    grid: TimeGrid = field(default_factory=TimeGrid)
    epsilon: float = 0.01
    iterations: int = 500
    clip: float | None = 0.2
    mode: EvolutionMode = field(default_factory=lambda: EvolutionMode.feedback(math.pi / 2))
    gradient_method: GradientMethod = "exact"
    step_rule: StepRule = "normalized"
    restarts: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 0:
            raise ValueError("iteration count must be nonnegative")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip bound must be positive")
        if self.gradient_method not in ("surrogate", "adjoint", "exact", "finite_difference"):
            raise ValueError(f"unknown gradient method {self.gradient_method!r}")
        if self.step_rule not in ("normalized", "raw"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")


@dataclass
class GrapeResult:
    controls: np.ndarray
    qfi_history: list[float]
    best_controls: np.ndarray
    best_qfi: float
    best_history: list[float] = field(default_factory=list)


def objective(controls, p: SystemParams, mode: EvolutionMode, grid: TimeGrid, rho0) -> float:
    """QFI of the coupling at the final time."""
    rho, s = final_state_and_sensitivity(rho0, p, controls, mode, grid)
    return qfi(rho, s)


def _tr_functional(X: np.ndarray) -> np.ndarray:
    # Tr[X Y] == _tr_functional(X) @ vec(Y)
    return vectorize(X.T)


def _forward(rho0, gens, dG, dt, augmented: bool):
    """Segment propagators and the states entering each segment."""
    n = 32 if augmented else 16
    x = vectorize(np.asarray(rho0, dtype=complex))
    if augmented:
        x = np.concatenate([x, np.zeros(16, dtype=complex)])
    props, inputs = [], []
    memo: dict[int, np.ndarray] = {}
    for G in gens:
        key = id(G)
        if key not in memo:
            A = augmented_generator(G, dG) if augmented else G
            memo[key] = mat_exp(dt * A)
        inputs.append(x)
        x = memo[key] @ x
        props.append(memo[key])
    assert x.shape == (n,)
    return props, inputs, x


def gradient(controls, p: SystemParams, mode: EvolutionMode, grid: TimeGrid, rho0,
             method: GradientMethod = "exact", surrogate_sld: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the objective with respect to every control entry, shape (M, 6).

    With ``method="surrogate"`` the result is the exact gradient of
    ``Tr[rho(T) L^2]`` for ``L`` frozen at the current controls, or at
    ``surrogate_sld`` when given.
    """
    return value_and_gradient(controls, p, mode, grid, rho0, method, surrogate_sld)[1]


def value_and_gradient(controls, p: SystemParams, mode: EvolutionMode, grid: TimeGrid, rho0,
                       method: GradientMethod = "exact",
                       surrogate_sld: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """``(objective, gradient)`` sharing one forward pass."""
    u = np.asarray(controls, dtype=float).reshape(grid.M, 6)
    if method not in ("surrogate", "adjoint", "exact", "finite_difference"):
        raise ValueError(f"unknown gradient method {method!r}")
    if method == "finite_difference":
        f = lambda v: objective(v, p, mode, grid, rho0)
        return f(u), _fd_gradient(f, u)

    gens = segment_generators(p, u, mode)
    dG = coupling_derivative_super()
    dt = grid.dt
    augmented = method == "exact"
    props, inputs, xT = _forward(rho0, gens, dG, dt, augmented)

    if augmented:
        rhoT, sT = hermitize(unvectorize(xT[:16])), hermitize(unvectorize(xT[16:]))
        value = qfi(rhoT, sT)
        L = compute_sld(rhoT, sT).matrix
        lam = np.concatenate([_tr_functional(-L @ L), _tr_functional(2.0 * L)])
    else:
        rhoT, sT = final_state_and_sensitivity(rho0, p, u, mode, grid)
        value = qfi(rhoT, sT)
        if surrogate_sld is None:
            surrogate_sld = compute_sld(rhoT, sT).matrix
        lam = _tr_functional(surrogate_sld @ surrogate_sld)

    directions = []
    for C in control_derivative_supers():
        if augmented:
            E = np.zeros((32, 32), dtype=complex)
            E[:16, :16] = C
            E[16:, 16:] = C
        else:
            E = C
        directions.append(dt * E)

    # lam^T Dexp_A[E] x == Tr(Dexp_A[x lam^T] E): one Frechet derivative per segment
    directions_t = np.stack([E.T for E in directions])
    grad = np.zeros((grid.M, 6))
    for n in range(grid.M - 1, -1, -1):
        A = dt * (augmented_generator(gens[n], dG) if augmented else gens[n])
        Z = expm_frechet(A, np.outer(inputs[n], lam), compute_expm=False)
        grad[n] = np.real(np.einsum("ab,jab->j", Z, directions_t))
        lam = props[n].T @ lam
    return value, grad


def surrogate_objective(controls, p, mode, grid, rho0, L_fix: np.ndarray) -> float:
    rho, _ = final_state_and_sensitivity(rho0, p, controls, mode, grid)
    return float(np.trace(rho @ L_fix @ L_fix).real)


def _fd_gradient(f, u: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(u)
    for idx in np.ndindex(u.shape):
        up = u.copy()
        dn = u.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (f(up) - f(dn)) / (2 * h)
    return grad


def _clip(u: np.ndarray, bound: float | None) -> np.ndarray:
    return u if bound is None else np.clip(u, -bound, bound)


def ascent_step(grad: np.ndarray, epsilon: float, rule: StepRule) -> np.ndarray:
    """Control update for one iteration.

    ``"raw"`` is ``epsilon * grad``.  ``"normalized"`` rescales the gradient by
    its largest entry so that no amplitude moves by more than ``epsilon``.
    """
    if rule == "raw":
        return epsilon * grad
    peak = np.max(np.abs(grad))
    return np.zeros_like(grad) if peak == 0 else epsilon * grad / peak


def _ascend(config: GrapeConfig, p: SystemParams, rho0, u0: np.ndarray, callback=None):
    u = _clip(np.array(u0, dtype=float), config.clip)
    history: list[float] = []
    best_history: list[float] = []
    best_u, best = u.copy(), -np.inf
    for it in range(config.iterations):
        value, grad = value_and_gradient(u, p, config.mode, config.grid, rho0,
                                         config.gradient_method)
        history.append(value)
        if value > best:
            best, best_u = value, u.copy()
        best_history.append(best)
        if callback is not None:
            callback(it, value, u)
        u = _clip(u + ascent_step(grad, config.epsilon, config.step_rule), config.clip)
    return u, history, best_u, best, best_history


def optimize(config: GrapeConfig, p: SystemParams, rho0, initial_controls=None,
             callback=None) -> GrapeResult:
    """Run clipped gradient ascent; returns the final and best-seen controls."""
    M = config.grid.M
    u0 = np.zeros((M, 6)) if initial_controls is None else np.asarray(initial_controls, dtype=float)
    if u0.shape != (M, 6):
        raise ValueError(f"initial controls must have shape ({M}, 6)")
    if config.iterations == 0:
        u0 = u0.copy()
        return GrapeResult(u0, [], u0.copy(), objective(u0, p, config.mode, config.grid, rho0), [])

    u, history, best_u, best, best_hist = _ascend(config, p, rho0, u0, callback)
    result = GrapeResult(u, history, best_u, best, best_hist)
    if config.restarts:
        rng = np.random.default_rng(config.seed)
        scale = config.clip if config.clip is not None else 0.2
        for r in range(config.restarts):
            start = rng.uniform(-scale, scale, size=(M, 6))
            u, history, bu, b, bh = _ascend(config, p, rho0, start)
            log.info("restart %d reached %.4g", r, b)
            if b > result.best_qfi:
                result = GrapeResult(u, history, bu, b, bh)
    return result
