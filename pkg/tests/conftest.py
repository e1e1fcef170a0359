import warnings

import numpy as np
import pytest

from wgdl.field import ComplexField, ResolutionWarning, SpectralField, make_gaussian, to_physical
from wgdl.grid import GridSpec, make_grid


def grid_of(d, n, L, ne, nt=4, period=2 * np.pi):
    return make_grid(GridSpec(d, n, float(L), ne, nt, period))


def smooth_random(grid, seed=0, decay=4.0):
    """Random field with a Gaussian-decaying spectrum."""
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    c *= np.exp(-grid.table.k2 / decay)
    return to_physical(SpectralField(grid, c))


def quiet_gaussian(grid, width, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return make_gaussian(grid, width, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
