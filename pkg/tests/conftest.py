import math

import numpy as np
import pytest

from zzestim.model import EvolutionMode, SystemParams
from zzestim.qcore import projector


def random_hermitian(rng, n=4, scale=1.0):
    b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (b + b.conj().T) / 2


def random_density(rng, rank=4):
    b = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = b @ b.conj().T
    return rho / np.trace(rho).real


def random_traceless_hermitian(rng):
    h = random_hermitian(rng)
    return h - np.trace(h).real / 4 * np.eye(4)


def random_params(rng, g_max=0.5):
    return SystemParams(omega1=rng.uniform(0, 2), omega2=rng.uniform(0, 2),
                        g=rng.uniform(0, g_max), gamma1=rng.uniform(0, 0.2),
                        gamma2=rng.uniform(0, 0.2))


def random_mode(rng):
    k = rng.integers(3)
    lam = rng.uniform(0, math.pi)
    channels = ("both", "first")[rng.integers(2)]
    if k == 0:
        return EvolutionMode.free()
    if k == 1:
        return EvolutionMode.feedback(lam, channels)
    return EvolutionMode.imperfect(lam, rng.uniform(0, 1), channels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def plus_plus():
    return projector(np.full(4, 0.5))


ALL_MODES = [
    EvolutionMode.free(),
    EvolutionMode.feedback(math.pi / 2),
    EvolutionMode.feedback(math.pi / 3, "first"),
    EvolutionMode.imperfect(math.pi / 2, 0.4),
    EvolutionMode.imperfect(1.0, 0.7, "both"),
]


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
