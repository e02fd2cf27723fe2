import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from frozenplanet.grid import LoopGrid, SymmetryClass, ZLoop, ZPair  # noqa: E402


def random_pair(grid: LoopGrid, rng, symmetric: bool = True) -> ZPair:
    """Admissible pair: z1 positive and well above z2, z2 with one transverse zero per period."""
    tau = np.asarray(grid.tau)
    c = 1.5 + 0.2 * rng.random()
    z1 = c + 0.1 * rng.standard_normal() * np.cos(2 * np.pi * tau) + 0.05 * rng.standard_normal() * np.cos(4 * np.pi * tau)
    z2 = 0.8 * np.sin(np.pi * tau) + 0.1 * rng.standard_normal() * np.sin(3 * np.pi * tau)
    if symmetric:
        c1, c2 = SymmetryClass.SYMMETRIC_PERIODIC1, SymmetryClass.SYMMETRIC_ANTIPERIODIC
    else:
        z1 = z1 + 0.1 * np.sin(2 * np.pi * tau)
        z2 = z2 + 0.1 * np.cos(np.pi * tau) + 0.05 * np.cos(3 * np.pi * tau)
        c1, c2 = SymmetryClass.PERIODIC1, SymmetryClass.ANTIPERIODIC
    return ZPair(ZLoop(grid, z1, c1), ZLoop(grid, z2, c2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid128():
    return LoopGrid(128)


@pytest.fixture(scope="session")
def grid256():
    return LoopGrid(256)


@pytest.fixture(scope="session")
def grid512():
    return LoopGrid(512)


@pytest.fixture(scope="session")
def frozen_planet_512():
    """Two-stage continuation to r=1 at n=512 (path followed on n=128)."""
    from frozenplanet.solvers import continue_homotopy

    return continue_homotopy(5, 10, n=512, coarse_n=128)


@pytest.fixture(scope="session")
def frozen_planet_256():
    from frozenplanet.solvers import continue_homotopy

    return continue_homotopy(5, 10, n=256, coarse_n=128)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
