import numpy as np
import pytest

from prhtomo.fock import TwoModeMixture, beamsplitter, squeezed_vacuum
from prhtomo.patterns import PatternTable, build_wavefunctions


@pytest.fixture(scope="session")
def wavefunction_table():
    """Full production grid (h=0.005, x_max=10) up to m=12, built once."""
    return build_wavefunctions(12, 10.0, 0.005)


@pytest.fixture(scope="session")
def pattern_table(wavefunction_table):
    return PatternTable(wavefunction_table)


@pytest.fixture(scope="session")
def coarse_pattern_table():
    """Cheaper table for tests that only need moderate accuracy."""
    return PatternTable(build_wavefunctions(8, 9.0, 0.01))


def make_lossy_tap_state(r, tap_power, eff_a, eff_b, n_trunc=30):
    """Oracle two-mode state: squeezed vacuum through the tap beamsplitter,
    detector losses applied to both arms."""
    eta = np.sqrt(1.0 - tap_power)
    pure = beamsplitter(squeezed_vacuum(r, n_trunc), eta)
    mix = TwoModeMixture.from_pure(pure)
    if eff_a < 1.0:
        mix = mix.apply_loss("a", eff_a)
    if eff_b < 1.0:
        mix = mix.apply_loss("b", eff_b)
    return mix


@pytest.fixture(scope="session")
def reference_mixture():
    """The r=0.35, 10% tap, 98% efficiency oracle state used across tests."""
    return make_lossy_tap_state(0.35, 0.10, 0.98, 0.98)


def sample_from_pdf(pdf, grid, size, rng):
    """Inverse-transform sampling of a tabulated density."""
    dx = grid[1] - grid[0]
    cdf = np.cumsum(pdf) * dx
    cdf /= cdf[-1]
    xp = np.concatenate(([0.0], cdf))
    fp = np.concatenate(([grid[0]], grid))
    return np.interp(rng.random(size), xp, fp)
