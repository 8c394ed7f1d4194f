import numpy as np
import pytest

from zzestim.analytic import IMPLEMENTED, analytic_free_rho
from zzestim.dynamics import TimeGrid, propagate
from zzestim.model import EvolutionMode, SystemParams


def test_initial_state():
    rho, mask = analytic_free_rho(0.0, SystemParams())
    assert np.max(np.abs(rho[mask] - 0.25)) <= 1e-12
    assert mask.sum() == 12 and not mask[1, 3] and not mask[2, 3]


def test_doubly_excited_decay():
    rho, _ = analytic_free_rho(10.0, SystemParams(gamma1=0.05, gamma2=0.05))
    assert rho[0, 0].real == pytest.approx(0.25 * np.exp(-1.0), abs=1e-15)
    assert rho[0, 0].real == pytest.approx(0.09197, abs=5e-6)


def test_long_time_limit():
    rho, mask = analytic_free_rho(500.0, SystemParams())
    assert rho[3, 3].real == pytest.approx(1.0, abs=1e-9)
    off = mask.copy()
    off[3, 3] = False
    assert np.max(np.abs(rho[off])) <= 1e-9


def test_diagonal_sums_to_one():
    for t in np.linspace(0, 200, 41):
        rho, _ = analytic_free_rho(t, SystemParams(gamma1=0.03, gamma2=0.11))
        assert abs(np.trace(rho) - 1.0) <= 1e-10


def test_rejects_negative_time():
    with pytest.raises(ValueError):
        analytic_free_rho(-1.0, SystemParams())


def test_matches_propagator(rng, plus_plus):
    """50 random parameter sets, implemented entries within 1e-8 of the propagator."""
    for _ in range(50):
        p = SystemParams(rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 0.5),
                         rng.uniform(0, 0.2), rng.uniform(0, 0.2))
        t = rng.uniform(0.1, 80)
        numeric = propagate(plus_plus, p, None, EvolutionMode.free(), TimeGrid(t, 1)).final
        rho, mask = analytic_free_rho(t, p)
        assert np.max(np.abs(rho[mask] - numeric[mask])) <= 1e-8


def test_implemented_subset_listed():
    assert set(IMPLEMENTED) == {(0, 0), (0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (2, 2), (3, 3)}
