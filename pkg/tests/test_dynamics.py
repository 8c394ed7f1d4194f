import math

import numpy as np
import pytest

from zzestim.dynamics import (TimeGrid, final_state_and_sensitivity, propagate,
                              propagate_with_sensitivity, zero_controls)
from zzestim.model import EvolutionMode, SystemParams
from zzestim.qcore import InvalidState

from conftest import ALL_MODES, random_density, random_mode, random_params

FIG1 = SystemParams(1.0, 1.0, 0.1, 0.05, 0.05)


def test_time_grid():
    g = TimeGrid()
    assert (g.T, g.M, g.dt) == (80.0, 100, 0.8)
    assert g.times[0] == 0.0 and g.times[-1] == 80.0 and len(g.times) == 101
    for bad in ((0.0, 10), (10.0, 0), (10.0, 2.5)):
        with pytest.raises(ValueError):
            TimeGrid(*bad)


def test_unitary_purity(plus_plus):
    p = SystemParams(gamma1=0.0, gamma2=0.0)
    traj = propagate(plus_plus, p, None, EvolutionMode.free(), TimeGrid())
    purity = np.einsum("nij,nji->n", traj.states, traj.states).real
    assert np.max(np.abs(purity - 1.0)) <= 1e-10


def test_doubly_excited_population_decay(plus_plus):
    traj = propagate(plus_plus, FIG1, None, EvolutionMode.free(), TimeGrid())
    expected = 0.25 * np.exp(-2 * 0.05 * traj.times)
    assert np.max(np.abs(traj.states[:, 0, 0].real - expected)) <= 1e-8


@pytest.mark.parametrize("mode", ALL_MODES, ids=lambda m: f"{m.tag}-{m.channels}")
def test_trace_preserved(plus_plus, rng, mode):
    u = rng.uniform(-0.2, 0.2, size=(50, 6))
    traj = propagate(plus_plus, FIG1, u, mode, TimeGrid(40.0, 50))
    assert np.max(np.abs(np.trace(traj.states, axis1=1, axis2=2) - 1.0)) <= 1e-10
    assert min(np.linalg.eigvalsh(s)[0] for s in traj.states) >= -1e-8


def test_controls_shape_checked(plus_plus):
    with pytest.raises(ValueError):
        propagate(plus_plus, FIG1, np.zeros((5, 6)), EvolutionMode.free(), TimeGrid(10.0, 4))


def test_invalid_initial_state():
    with pytest.raises(InvalidState):
        propagate(np.eye(4), FIG1, None, EvolutionMode.free(), TimeGrid(1.0, 1))


def test_composition(plus_plus, rng):
    u = rng.uniform(-0.2, 0.2, size=(40, 6))
    mode = EvolutionMode.feedback(1.2)
    full = propagate(plus_plus, FIG1, u, mode, TimeGrid(40.0, 40))
    first = propagate(plus_plus, FIG1, u[:20], mode, TimeGrid(20.0, 20))
    second = propagate(first.final, FIG1, u[20:], mode, TimeGrid(20.0, 20))
    assert np.max(np.abs(full.final - second.final)) <= 1e-10
    assert np.max(np.abs(full.states[20] - first.final)) <= 1e-10


def test_g_independent_generator_has_zero_sensitivity(plus_plus):
    p = SystemParams(g=0.0)
    traj = propagate_with_sensitivity(plus_plus, p, None, EvolutionMode.free(), TimeGrid(),
                                      dG=np.zeros((16, 16)))
    assert np.array_equal(traj.sensitivities, np.zeros_like(traj.sensitivities))


def fd_sensitivity(rho0, p, u, mode, grid, h=1e-5):
    f = lambda g: propagate(rho0, p.with_g(g), u, mode, grid, validate=False).final
    return (f(p.g + h) - f(p.g - h)) / (2 * h)


def test_sensitivity_matches_fd_fig1(plus_plus):
    # plain central differences at h = 1e-5 carry an O(h^2 (4T)^3) truncation error of
    # about 2.4e-6 here, so the oracle is Richardson-extrapolated from h and h/2
    grid, mode = TimeGrid(), EvolutionMode.free()
    traj = propagate_with_sensitivity(plus_plus, FIG1, None, mode, grid)
    h = 1e-5
    fd = (4 * fd_sensitivity(plus_plus, FIG1, None, mode, grid, h / 2)
          - fd_sensitivity(plus_plus, FIG1, None, mode, grid, h)) / 3
    assert np.max(np.abs(traj.sensitivities[-1] - fd)) <= 1e-6
    assert np.max(np.abs(np.trace(traj.sensitivities, axis1=1, axis2=2))) <= 1e-10


def test_fd_discrepancy_is_truncation(plus_plus):
    grid, mode = TimeGrid(), EvolutionMode.free()
    s = propagate_with_sensitivity(plus_plus, FIG1, None, mode, grid).sensitivities[-1]
    err = [np.max(np.abs(s - fd_sensitivity(plus_plus, FIG1, None, mode, grid, h)))
           for h in (1e-4, 1e-5)]
    assert 90 <= err[0] / err[1] <= 110


def test_sensitivity_matches_fd_random(rng):
    """Block-exponential vs central differences, relative error, 20 trials over all modes."""
    for _ in range(20):
        p, mode = random_params(rng), random_mode(rng)
        grid = TimeGrid(rng.uniform(5, 40), 10)
        u = rng.uniform(-0.2, 0.2, size=(10, 6))
        rho0 = random_density(rng)
        s = propagate_with_sensitivity(rho0, p, u, mode, grid).sensitivities[-1]
        fd = fd_sensitivity(rho0, p, u, mode, grid)
        assert np.max(np.abs(s - fd)) <= 1e-4 * np.max(np.abs(fd))


def test_fast_path_agrees(plus_plus, rng):
    u = rng.uniform(-0.2, 0.2, size=(100, 6))
    mode = EvolutionMode.feedback(math.pi / 2)
    traj = propagate_with_sensitivity(plus_plus, FIG1, u, mode, TimeGrid())
    rho, s = final_state_and_sensitivity(plus_plus, FIG1, u, mode, TimeGrid())
    assert np.max(np.abs(rho - traj.final)) <= 1e-12
    assert np.max(np.abs(s - traj.sensitivities[-1])) <= 1e-10


def test_zero_controls_match_none(plus_plus):
    grid = TimeGrid(8.0, 10)
    a = propagate(plus_plus, FIG1, None, EvolutionMode.free(), grid).states
    b = propagate(plus_plus, FIG1, zero_controls(10), EvolutionMode.free(), grid).states
    assert np.array_equal(a, b)


def test_property_suite_random_propagations(rng):
    """500 random propagations: Hermitian, unit trace, positive at every step."""
    for _ in range(500):
        p, mode = random_params(rng), random_mode(rng)
        M = int(rng.integers(1, 6))
        grid = TimeGrid(rng.uniform(0.1, 80), M)
        u = rng.uniform(-0.5, 0.5, size=(M, 6))
        rank = int(rng.integers(1, 5))
        traj = propagate(random_density(rng, rank), p, u, mode, grid)
        for s in traj.states:
            assert np.max(np.abs(s - s.conj().T)) <= 1e-10
            assert abs(np.trace(s) - 1) <= 1e-10
            assert np.linalg.eigvalsh(s)[0] >= -1e-8
