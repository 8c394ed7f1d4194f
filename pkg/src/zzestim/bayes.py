"""Batch-adaptive Bayesian recovery of the coupling ``g``.

Each batch measures ``R`` copies of the final state with one fixed POVM,
updates a grid posterior outcome by outcome, takes the posterior mean as the
new estimate, and re-derives the POVM from the SLD at that estimate.
"""
from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import grape
from .dynamics import TimeGrid, final_state_and_sensitivity, propagate, zero_controls
from .fisher import MeasurementSet, compute_sld, optimal_povm_from_sld
from .model import EvolutionMode, SystemParams
from .qcore import projector

log = logging.getLogger(__name__)

Scheme = Literal["none", "feedback", "hybrid"]
SampleKind = Literal["perfect", "imperfect"]

LIKELIHOOD_FLOOR = 1e-12
GRID_POINTS = 100
GRID_RANGE = (0.0, 0.2)


class DegeneratePosterior(ValueError):
    pass


@dataclass(frozen=True)
class PosteriorGrid:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1:
            raise ValueError("values and probs must be matching 1-D arrays")
        if np.any(np.diff(values) <= 0):
            raise ValueError("grid values must be strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-10:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, n: int = GRID_POINTS, lo: float = GRID_RANGE[0],
                hi: float = GRID_RANGE[1]) -> "PosteriorGrid":
        return cls(np.linspace(lo, hi, n), np.full(n, 1.0 / n))

    def nearest(self, g: float) -> float:
        return float(self.values[np.argmin(np.abs(self.values - g))])


@dataclass(frozen=True)
class BayesConfig:
    batches: int = 20
    copies_per_batch: int = 100
    scheme: Scheme = "feedback"
    sample_kind: SampleKind = "perfect"
    seed: int = 0
    grid: TimeGrid = field(default_factory=TimeGrid)
    g_true: float = 0.1
    lam: float = math.pi / 2
    feedback_channels: str = "both"
    grape_iterations: int = 50
    grape_epsilon: float = 0.01
    grape_clip: float | None = 0.2
    grape_step_rule: str = "normalized"

    def __post_init__(self):
        if self.batches < 1 or self.copies_per_batch < 1:
            raise ValueError("need at least one batch and one copy per batch")
        if self.scheme not in ("none", "feedback", "hybrid"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.sample_kind not in ("perfect", "imperfect"):
            raise ValueError(f"unknown sample kind {self.sample_kind!r}")

    @property
    def mode(self) -> EvolutionMode:
        if self.scheme == "none":
            return EvolutionMode.free()
        return EvolutionMode.feedback(self.lam, self.feedback_channels)


@dataclass
class BatchRecord:
    estimate: float
    posterior: np.ndarray
    povm: tuple
    sample_digest: str
    counts: tuple[int, ...]


@dataclass
class EstimateRecord:
    batches: list[BatchRecord]
    g_true: float
    values: np.ndarray

    @property
    def estimates(self) -> np.ndarray:
        return np.array([b.estimate for b in self.batches])

    @property
    def mse(self) -> float:
        return float(np.mean((self.estimates - self.g_true) ** 2))


# ---------------------------------------------------------------- measurement

_EQ30 = 0.25 * np.array([
    [[1, 1j, 1j, 1], [-1j, 1, 1, -1j], [-1j, 1, 1, -1j], [1, 1j, 1j, 1]],
    [[1, 1j, -1j, -1], [-1j, 1, -1, 1j], [1j, -1, 1, -1j], [-1, -1j, 1j, 1]],
    [[1, -1j, 1j, -1], [1j, 1, -1, -1j], [-1j, -1, 1, 1j], [-1, 1j, -1j, 1]],
    [[1, -1j, -1j, 1], [1j, 1, 1, 1j], [1j, 1, 1, 1j], [1, -1j, -1j, 1]],
], dtype=complex)


def initial_povm() -> MeasurementSet:
    """The fixed four-outcome measurement used before any data arrive."""
    return MeasurementSet(tuple(_EQ30))


def outcome_probs(rho, povm: MeasurementSet) -> np.ndarray:
    p = np.real(np.einsum("ij,kji->k", np.asarray(rho), povm.stacked))
    p = np.where(p < 0, 0.0, p)
    return p / p.sum()


def largest_remainder_counts(probs, R: int) -> np.ndarray:
    """Integer counts summing to ``R`` closest to ``R * probs``; ties go to lower index."""
    quota = np.asarray(probs, dtype=float) * R
    counts = np.floor(quota + 1e-12).astype(int)
    short = R - counts.sum()
    if short > 0:
        rem = quota - counts
        order = sorted(range(len(rem)), key=lambda i: (-round(rem[i], 12), i))
        for i in order[:short]:
            counts[i] += 1
    return counts


def sample_perfect(probs, R: int, rng: np.random.Generator) -> np.ndarray:
    """Exact expected proportions, in shuffled order."""
    counts = largest_remainder_counts(probs, R)
    seq = np.repeat(np.arange(len(counts)), counts)
    return rng.permutation(seq)


def roulette_pick(u: float, cumulative) -> int:
    """Outcome ``l`` with ``u`` in ``(d_{l-1}, d_l]`` (``(0, d_0]`` for ``l = 0``)."""
    d = np.asarray(cumulative, dtype=float)
    return int(min(np.searchsorted(d, u, side="left"), len(d) - 1))


def sample_roulette(probs, R: int, rng: np.random.Generator) -> np.ndarray:
    d = np.cumsum(np.asarray(probs, dtype=float))
    d[-1] = 1.0
    u = rng.random(R)
    return np.array([roulette_pick(x, d) for x in u], dtype=int)


# ---------------------------------------------------------------- inference

def posterior_update(grid: PosteriorGrid, outcome: int, likelihood_table) -> PosteriorGrid:
    like = np.maximum(np.asarray(likelihood_table)[:, outcome], LIKELIHOOD_FLOOR)
    w = grid.probs * like
    z = w.sum()
    if z <= 1e-300:
        raise DegeneratePosterior("all likelihoods vanish")
    return PosteriorGrid(grid.values, w / z)


def update_sequence(grid: PosteriorGrid, outcomes, likelihood_table) -> PosteriorGrid:
    for y in outcomes:
        grid = posterior_update(grid, int(y), likelihood_table)
    return grid


def batch_update(grid: PosteriorGrid, outcomes, likelihood_table) -> PosteriorGrid:
    """One-shot update with the product of all likelihoods (log domain)."""
    like = np.log(np.maximum(np.asarray(likelihood_table), LIKELIHOOD_FLOOR))
    counts = np.bincount(np.asarray(outcomes, dtype=int), minlength=like.shape[1])
    logw = np.log(np.maximum(grid.probs, 1e-300)) + like @ counts
    logw = np.where(grid.probs > 0, logw, -np.inf)
    w = np.exp(logw - logw.max())
    return PosteriorGrid(grid.values, w / w.sum())


def posterior_mean(grid: PosteriorGrid) -> float:
    return float(grid.values @ grid.probs)


# ---------------------------------------------------------------- model glue

def final_states(values, p: SystemParams, controls, mode: EvolutionMode, grid: TimeGrid,
                 rho0) -> np.ndarray:
    return np.stack([propagate(rho0, p.with_g(float(g)), controls, mode, grid,
                               validate=False).final for g in values])


def likelihood_table(values, povm: MeasurementSet, p: SystemParams, controls,
                     mode: EvolutionMode, grid: TimeGrid, rho0) -> np.ndarray:
    """Outcome probabilities of the final state for every candidate ``g``, shape (n, k)."""
    return np.stack([outcome_probs(r, povm)
                     for r in final_states(values, p, controls, mode, grid, rho0)])


def refresh_povm(g_hat: float, p: SystemParams, controls, mode: EvolutionMode,
                 grid: TimeGrid, rho0) -> MeasurementSet:
    """Projectors onto the SLD eigenbasis of the final state at ``g = g_hat``."""
    rho, s = final_state_and_sensitivity(rho0, p.with_g(g_hat), controls, mode, grid)
    return optimal_povm_from_sld(compute_sld(rho, s))


def batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(batch,)))


def _digest(seq) -> str:
    return hashlib.sha256(np.asarray(seq, dtype=np.int8).tobytes()).hexdigest()[:16]


def run_protocol(config: BayesConfig, p: SystemParams | None = None, rho0=None,
                 callback=None) -> EstimateRecord:
    """Run all batches and return per-batch estimates; ``p.g`` is ignored."""
    p = p or SystemParams()
    rho0 = projector(np.full(4, 0.5)) if rho0 is None else rho0
    grid = config.grid
    mode = config.mode
    truth = p.with_g(config.g_true)

    posterior = PosteriorGrid.uniform()
    controls = zero_controls(grid.M)
    povm = initial_povm()
    g_hat = None
    batches: list[BatchRecord] = []
    grape_cfg = grape.GrapeConfig(grid=grid, epsilon=config.grape_epsilon,
                                  iterations=config.grape_iterations, clip=config.grape_clip,
                                  mode=mode, step_rule=config.grape_step_rule)

    for n in range(1, config.batches + 1):
        if config.scheme == "hybrid" and n >= 2:
            res = grape.optimize(grape_cfg, p.with_g(g_hat), rho0, initial_controls=controls)
            controls = res.best_controls
            log.info("batch %d: GRAPE at g=%.5f reached QFI %.4g", n, g_hat, res.best_qfi)
        if n >= 2:
            povm = refresh_povm(g_hat, p, controls, mode, grid, rho0)

        table = likelihood_table(posterior.values, povm, p, controls, mode, grid, rho0)
        rho_true = propagate(rho0, truth, controls, mode, grid, validate=False).final
        probs = outcome_probs(rho_true, povm)
        rng = batch_rng(config.seed, n)
        if config.sample_kind == "perfect":
            seq = sample_perfect(probs, config.copies_per_batch, rng)
        else:
            seq = sample_roulette(probs, config.copies_per_batch, rng)

        posterior = update_sequence(posterior, seq, table)
        g_hat = posterior_mean(posterior)
        counts = tuple(int(c) for c in np.bincount(seq, minlength=len(povm)))
        batches.append(BatchRecord(g_hat, posterior.probs.copy(), povm.elements, _digest(seq), counts))
        if callback is not None:
            callback(n, g_hat)
    return EstimateRecord(batches, config.g_true, posterior.values)
