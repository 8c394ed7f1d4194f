"""Figure and table pipelines behind the command line front end.

Every pipeline takes a resolved :class:`RunConfig` and returns a mapping of
output name to :class:`Table`; nothing here touches the filesystem.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import bayes, grape
from .dynamics import (TimeGrid, augmented_generator, propagate_with_sensitivity,
                       zero_controls)
from .fisher import qfi
from .model import (EvolutionMode, SystemParams, build_h0, commutator_super,
                    coupling_derivative_super, feedback_dissipator, feedback_unitary)
from .qcore import hermitize, mat_exp, projector, unvectorize, vectorize

log = logging.getLogger(__name__)

EXPERIMENTS = ("fig1", "fig2", "fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b",
               "fig6a", "fig6b", "fig7a", "fig7b", "fig9", "table1", "custom")
SEEDED = ("fig9", "table1")
CHANNEL_NAMES = ("x1", "y1", "z1", "x2", "y2", "z2")

PROBES = {
    "++": np.full(4, 0.5),
    "phi+": np.array([1, 0, 0, 1]) / math.sqrt(2),
    "psi+": np.array([0, 1, 1, 0]) / math.sqrt(2),
}


@dataclass(frozen=True)
class RunConfig:
    omega1: float = 1.0
    omega2: float = 1.0
    gamma: float = 0.05
    g_true: float = 0.1
    lam: float = math.pi / 2
    eta: float = 1.0
    T: float = 80.0
    M: int = 100
    epsilon: float = 0.01
    iterations: int = 500
    clip: float | None = 0.2
    N: int = 20
    R: int = 100
    seed: int | None = None
    scheme: str = "feedback"
    sample_kind: str = "perfect"
    feedback_channels: str | None = None
    batch_iterations: int = 50

    def __post_init__(self):
        for name in ("omega1", "omega2", "gamma", "g_true", "lam", "eta", "T", "epsilon"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
            object.__setattr__(self, name, float(v))
        for name in ("M", "iterations", "N", "R", "batch_iterations"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ValueError(f"{name} must be an integer, got {v!r}")
        if self.seed is not None and (isinstance(self.seed, bool) or not isinstance(self.seed, int)
                                      or not 0 <= self.seed < 2 ** 64):
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.clip is not None:
            if isinstance(self.clip, bool) or not isinstance(self.clip, (int, float)):
                raise ValueError(f"clip must be a number or null, got {self.clip!r}")
            object.__setattr__(self, "clip", float(self.clip))
        if self.scheme not in ("none", "feedback", "hybrid"):
            raise ValueError(f"scheme must be none, feedback or hybrid, got {self.scheme!r}")
        if self.sample_kind not in ("perfect", "imperfect"):
            raise ValueError(f"sample_kind must be perfect or imperfect, got {self.sample_kind!r}")
        if self.feedback_channels not in (None, "both", "first"):
            raise ValueError(f"feedback_channels must be both or first, got {self.feedback_channels!r}")
        # surface the domain checks of the library types at resolve time
        self.params()
        self.grid()
        self.feedback_mode()
        self.imperfect_mode(self.eta)
        grape.GrapeConfig(grid=self.grid(), epsilon=self.epsilon, iterations=self.iterations,
                          clip=self.clip)
        bayes.BayesConfig(batches=self.N, copies_per_batch=self.R)

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        unknown = sorted(set(values) - set(cls.keys()))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def params(self, g: float | None = None) -> SystemParams:
        return SystemParams(self.omega1, self.omega2, self.g_true if g is None else g,
                            self.gamma, self.gamma)

    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.M)

    def feedback_mode(self, lam: float | None = None) -> EvolutionMode:
        return EvolutionMode.feedback(self.lam if lam is None else lam,
                                      self.feedback_channels or "both")

    def imperfect_mode(self, eta: float) -> EvolutionMode:
        return EvolutionMode.imperfect(self.lam, eta, self.feedback_channels or "first")

    def scheme_mode(self) -> EvolutionMode:
        if self.scheme == "none":
            return EvolutionMode.free()
        if self.eta < 1.0:
            return self.imperfect_mode(self.eta)
        return self.feedback_mode()

    def grape_config(self, mode: EvolutionMode, clip="default") -> grape.GrapeConfig:
        return grape.GrapeConfig(grid=self.grid(), epsilon=self.epsilon,
                                 iterations=self.iterations,
                                 clip=self.clip if clip == "default" else clip, mode=mode)

    def bayes_truth(self) -> float:
        # the protocol samples at the posterior grid value nearest g_true
        return bayes.PosteriorGrid.uniform().nearest(self.g_true)

    def bayes_config(self, scheme: str, sample_kind: str) -> bayes.BayesConfig:
        return bayes.BayesConfig(batches=self.N, copies_per_batch=self.R, scheme=scheme,
                                 sample_kind=sample_kind, seed=self.seed or 0,
                                 grid=self.grid(), g_true=self.bayes_truth(), lam=self.lam,
                                 feedback_channels=self.feedback_channels or "both",
                                 grape_iterations=self.batch_iterations,
                                 grape_epsilon=self.epsilon, grape_clip=self.clip)


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])


def pmap(fn, items, workers: int = 1) -> list:
    """Order-preserving map, optionally over a process pool."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- building blocks

def plus_plus() -> np.ndarray:
    return projector(PROBES["++"])


def qfi_curve(p: SystemParams, mode: EvolutionMode, grid: TimeGrid, rho0=None,
              controls=None) -> np.ndarray:
    """QFI at every segment boundary, including ``t = 0``."""
    rho0 = plus_plus() if rho0 is None else rho0
    traj = propagate_with_sensitivity(rho0, p, controls, mode, grid)
    return np.array([qfi(r, s) for r, s in zip(traj.states, traj.sensitivities)])


def qfi_at(t: float, p: SystemParams, mode: EvolutionMode, rho0=None) -> float:
    """QFI after uncontrolled evolution for time ``t`` (one exact exponential)."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0:
        return 0.0
    return float(qfi_curve(p, mode, TimeGrid(t, 1), rho0)[-1])


def qfi_curve_unitary(p: SystemParams, U: np.ndarray, channels: str, grid: TimeGrid,
                      rho0=None) -> np.ndarray:
    """Like :func:`qfi_curve` for perfect feedback with an arbitrary feedback unitary."""
    rho0 = plus_plus() if rho0 is None else rho0
    G = commutator_super(build_h0(p)) + feedback_dissipator(p, U, 1.0, (True, channels == "both"))
    P = mat_exp(grid.dt * augmented_generator(G, coupling_derivative_super()))
    x = np.concatenate([vectorize(rho0), np.zeros(16, dtype=complex)])
    out = [0.0]
    for _ in range(grid.M):
        x = P @ x
        out.append(qfi(hermitize(unvectorize(x[:16])), hermitize(unvectorize(x[16:]))))
    return np.array(out)


def _qfi_max_lambda(lam: float, p: SystemParams, channels: str, grid: TimeGrid) -> float:
    return float(qfi_curve_unitary(p, feedback_unitary(lam), channels, grid).max())


def lambda_scan(p: SystemParams, lams, channels: str, grid: TimeGrid, workers: int = 1) -> np.ndarray:
    """Peak-over-time QFI for each feedback strength (any real ``lam``)."""
    return np.array(pmap(partial(_qfi_max_lambda, p=p, channels=channels, grid=grid),
                         lams, workers))


def _grape_run(cfg: RunConfig, mode: EvolutionMode, p: SystemParams, rho0, clip="default"):
    gc = cfg.grape_config(mode, clip)
    log.info("GRAPE: %d iterations, mode %s, clip %s", gc.iterations, mode.tag, gc.clip)
    return grape.optimize(gc, p, rho0)


# ---------------------------------------------------------------- experiments

def fig1(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Free-evolution QFI(t) for ``g_true`` and ``2 g_true``."""
    grid = cfg.grid()
    tab = Table(("t", "g_true", "qfi"))
    for g in (cfg.g_true, 2 * cfg.g_true):
        curve = qfi_curve(cfg.params(g), EvolutionMode.free(), grid)
        tab.rows += [(t, g, f) for t, f in zip(grid.times, curve)]
    return {"fig1": tab}


def _lam_grid(n: int = 17, hi: float = math.pi) -> np.ndarray:
    return np.linspace(0.0, hi, n)


def _curve_for_lam(lam, cfg: RunConfig):
    return qfi_curve(cfg.params(), cfg.feedback_mode(lam), cfg.grid())


def fig2(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """QFI surface over feedback strength and time."""
    grid = cfg.grid()
    lams = _lam_grid()
    curves = pmap(partial(_curve_for_lam, cfg=cfg), lams, workers)
    tab = Table(("lam", "t", "qfi"))
    for lam, curve in zip(lams, curves):
        tab.rows += [(lam, t, f) for t, f in zip(grid.times, curve)]
    return {"fig2": tab}


def fig3a(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Peak QFI against feedback strength over two periods, ``[0, 2 pi]`` in ``pi/16`` steps."""
    lams = _lam_grid(33, 2 * math.pi)
    peaks = lambda_scan(cfg.params(), lams, cfg.feedback_channels or "both", cfg.grid(), workers)
    base = peaks[0]
    tab = Table(("lam", "qfi_max", "improvement"))
    tab.rows = [(lam, f, (f - base) / base) for lam, f in zip(lams, peaks)]
    return {"fig3a": tab}


def fig3b(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Relative peak improvement against feedback strength for three couplings."""
    lams = _lam_grid()
    tab = Table(("g_true", "lam", "improvement"))
    for g in (cfg.g_true, 2 * cfg.g_true, 3 * cfg.g_true):
        peaks = lambda_scan(cfg.params(g), lams, cfg.feedback_channels or "both", cfg.grid(), workers)
        tab.rows += [(g, lam, (f - peaks[0]) / peaks[0]) for lam, f in zip(lams, peaks)]
    return {"fig3b": tab}


def _curve_for_eta(eta, cfg: RunConfig):
    return qfi_curve(cfg.params(), cfg.imperfect_mode(eta), cfg.grid())


def fig4a(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """QFI surface over detection efficiency and time."""
    grid = cfg.grid()
    etas = np.linspace(0.0, 1.0, 11)
    curves = pmap(partial(_curve_for_eta, cfg=cfg), etas, workers)
    tab = Table(("eta", "t", "qfi"))
    for eta, curve in zip(etas, curves):
        tab.rows += [(eta, t, f) for t, f in zip(grid.times, curve)]
    return {"fig4a": tab}


def fig4b(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """QFI at the final time against detection efficiency."""
    etas = np.linspace(0.0, 1.0, 11)
    curves = pmap(partial(_curve_for_eta, cfg=cfg), etas, workers)
    tab = Table(("eta", "qfi"))
    tab.rows = [(eta, c[-1]) for eta, c in zip(etas, curves)]
    return {"fig4b": tab}


def _controls_table(u: np.ndarray, grid: TimeGrid) -> Table:
    tab = Table(("t", "channel", "u"))
    for n, t in enumerate(grid.times[:-1]):
        tab.rows += [(t, name, u[n, j]) for j, name in enumerate(CHANNEL_NAMES)]
    return tab


def fig5a(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Hybrid control law found without an amplitude bound."""
    res = _grape_run(cfg, cfg.feedback_mode(), cfg.params(), plus_plus(), clip=None)
    return {"fig5a": _controls_table(res.best_controls, cfg.grid())}


def fig5b(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Hybrid control law with amplitudes bounded by ``clip``."""
    res = _grape_run(cfg, cfg.feedback_mode(), cfg.params(), plus_plus())
    return {"fig5b": _controls_table(res.best_controls, cfg.grid())}


def _probe_history(name: str, cfg: RunConfig):
    res = _grape_run(cfg, cfg.feedback_mode(), cfg.params(), projector(PROBES[name]))
    return res.qfi_history


def fig6a(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Hybrid-control iteration histories from three probe states."""
    names = tuple(PROBES)
    hists = pmap(partial(_probe_history, cfg=cfg), names, workers)
    tab = Table(("probe", "iteration", "qfi"))
    for name, hist in zip(names, hists):
        tab.rows += [(name, i, f) for i, f in enumerate(hist)]
    return {"fig6a": tab}


def _hybrid_curve(g: float, cfg: RunConfig):
    p = cfg.params(g)
    res = _grape_run(cfg, cfg.feedback_mode(), p, plus_plus())
    return qfi_curve(p, cfg.feedback_mode(), cfg.grid(), controls=res.best_controls)


def fig6b(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """QFI(t) under optimized hybrid control for three couplings."""
    grid = cfg.grid()
    gs = (cfg.g_true, 2 * cfg.g_true, 3 * cfg.g_true)
    curves = pmap(partial(_hybrid_curve, cfg=cfg), gs, workers)
    tab = Table(("g_true", "t", "qfi"))
    for g, curve in zip(gs, curves):
        tab.rows += [(g, t, f) for t, f in zip(grid.times, curve)]
    return {"fig6b": tab}


def _history_for(mode_name: str, cfg: RunConfig):
    mode = cfg.feedback_mode() if mode_name == "hybrid" else EvolutionMode.free()
    return _grape_run(cfg, mode, cfg.params(), plus_plus()).qfi_history


def fig7a(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Iteration histories of hybrid control and of Hamiltonian-only GRAPE."""
    names = ("hybrid", "grape")
    hists = pmap(partial(_history_for, cfg=cfg), names, workers)
    tab = Table(("scheme", "iteration", "qfi"))
    for name, hist in zip(names, hists):
        tab.rows += [(name, i, f) for i, f in enumerate(hist)]
    return {"fig7a": tab}


def fig7b(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """QFI(t) with no control, feedback only and the optimized hybrid law."""
    grid, p = cfg.grid(), cfg.params()
    res = _grape_run(cfg, cfg.feedback_mode(), p, plus_plus())
    curves = {
        "none": qfi_curve(p, EvolutionMode.free(), grid),
        "feedback": qfi_curve(p, cfg.feedback_mode(), grid),
        "hybrid": qfi_curve(p, cfg.feedback_mode(), grid, controls=res.best_controls),
    }
    tab = Table(("scheme", "t", "qfi"))
    for name, curve in curves.items():
        tab.rows += [(name, t, f) for t, f in zip(grid.times, curve)]
    return {"fig7b": tab}


def _protocol(cell: tuple[str, str], cfg: RunConfig) -> bayes.EstimateRecord:
    scheme, kind = cell
    log.info("protocol: scheme %s, %s samples", scheme, kind)
    return bayes.run_protocol(cfg.bayes_config(scheme, kind), p=cfg.params())


def fig9(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """Per-batch estimates with and without feedback, both sample kinds."""
    cells = [(s, k) for s in ("none", "feedback") for k in ("imperfect", "perfect")]
    runs = pmap(partial(_protocol, cfg=cfg), cells, workers)
    tab = Table(("scheme", "sample_kind", "batch", "estimate", "g_true"))
    for (s, k), rec in zip(cells, runs):
        tab.rows += [(s, k, n, e, rec.g_true) for n, e in enumerate(rec.estimates, start=1)]
    return {"fig9": tab}


def table1(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """MSE of the per-batch estimates for all six scheme and sample combinations."""
    cells = [(s, k) for s in ("none", "feedback", "hybrid") for k in ("imperfect", "perfect")]
    runs = pmap(partial(_protocol, cfg=cfg), cells, workers)
    tab = Table(("scheme", "sample_kind", "mse"))
    tab.rows = [(s, k, rec.mse) for (s, k), rec in zip(cells, runs)]
    return {"table1": tab}


def custom(cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    """QFI(t) for the configured scheme; ``hybrid`` first optimizes the controls."""
    grid, p = cfg.grid(), cfg.params()
    mode = cfg.scheme_mode()
    controls = None
    if cfg.scheme == "hybrid":
        controls = _grape_run(cfg, mode, p, plus_plus()).best_controls
    tab = Table(("t", "qfi"))
    tab.rows = list(zip(grid.times, qfi_curve(p, mode, grid, controls=controls)))
    out = {"custom": tab}
    if controls is not None:
        out["custom_controls"] = _controls_table(controls, grid)
    return out


PIPELINES = {name: globals()[name] for name in EXPERIMENTS}


def run_experiment(name: str, cfg: RunConfig, workers: int = 1) -> dict[str, Table]:
    if name not in PIPELINES:
        raise ValueError(f"unknown experiment {name!r}")
    return PIPELINES[name](cfg, workers)


# ---------------------------------------------------------------- scans

SCAN_AXES = ("t", "lam", "eta", "g")
SCAN_METRICS = ("qfi", "qfi_max")


def _scan_point(point: dict, cfg: RunConfig, metric: str) -> float:
    p = cfg.params(point.get("g"))
    lam = point.get("lam", cfg.lam)
    eta = point.get("eta")
    if cfg.scheme == "none" and "lam" not in point and eta is None:
        mode = EvolutionMode.free()
    elif eta is not None:
        mode = EvolutionMode.imperfect(lam, eta, cfg.feedback_channels or "first")
    else:
        mode = EvolutionMode.feedback(lam, cfg.feedback_channels or "both")
    if metric == "qfi_max":
        return float(qfi_curve(p, mode, cfg.grid()).max())
    return qfi_at(point.get("t", cfg.T), p, mode)


def scan(axes: list[tuple[str, np.ndarray]], metric: str, cfg: RunConfig,
         workers: int = 1) -> Table:
    """Evaluate ``metric`` on the cartesian grid of ``axes`` (row-major).

    ``metric`` is ``qfi`` (QFI at ``t``, default ``T``) or ``qfi_max`` (peak over
    the segment boundaries of ``[0, T]``).  A ``lam`` or ``eta`` axis switches on
    feedback; otherwise the evolution follows ``cfg.scheme``.
    """
    if not 1 <= len(axes) <= 2:
        raise ValueError("scan takes one or two axes")
    names = [a for a, _ in axes]
    if len(set(names)) != len(names) or any(a not in SCAN_AXES for a in names):
        raise ValueError(f"axes must be distinct members of {SCAN_AXES}")
    if metric not in SCAN_METRICS:
        raise ValueError(f"metric must be one of {SCAN_METRICS}")
    if metric == "qfi_max" and "t" in names:
        raise ValueError("qfi_max already maximizes over t")
    if cfg.scheme == "hybrid":
        raise ValueError("scans support the none and feedback schemes only")
    points = [dict(zip(names, vals)) for vals in
              np.array(np.meshgrid(*[v for _, v in axes], indexing="ij")).reshape(len(axes), -1).T]
    for pt in points:
        # validate before dispatch so errors surface as configuration errors
        if "lam" in pt:
            EvolutionMode.feedback(pt["lam"])
        if "eta" in pt:
            EvolutionMode.imperfect(pt.get("lam", cfg.lam), pt["eta"])
        if pt.get("t", 0.0) < 0:
            raise ValueError("t must be nonnegative")
    values = pmap(partial(_scan_point, cfg=cfg, metric=metric), points, workers)
    tab = Table(tuple(names) + (metric,))
    tab.rows = [tuple(float(pt[a]) for a in names) + (v,) for pt, v in zip(points, values)]
    return tab
