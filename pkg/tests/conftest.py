from __future__ import annotations

import numpy as np
import pytest

from shearcoorb.grid import PhantomSpec, make_grid, make_phantom
from shearcoorb.transform import make_config
from shearcoorb.windows import WindowParams, default_pair

# narrow band used by the small transform fixtures (fits a 16^3 lattice of period 8)
SMALL_WINDOW = WindowParams(3, 0.0625, 0.1875, (0.125, 0.125))


@pytest.fixture(scope="session")
def pair():
    """Normalized default pair (d=3, a0=1, a1=3, b=1)."""
    return default_pair()


@pytest.fixture(scope="session")
def small_pair():
    return default_pair(SMALL_WINDOW)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(3, 16, 8.0)


@pytest.fixture(scope="session")
def small_cfg(small_grid, small_pair):
    return make_config(small_grid, small_pair, J=2, shear_spacing=0.5, shear_radius=1.0, cells_per_octave=1)


@pytest.fixture(scope="session")
def small_phantom(small_grid):
    return make_phantom(PhantomSpec(seed=7, band=(0.125, 0.25), cone=0.25), small_grid)


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


# ------------------------------------------------------------ acceptance report

ACCEPTANCE_LINES: list[str] = []


def acceptance_line(criterion: int, name: str, ok: bool, **fields) -> str:
    """Record and print one ``PASS|FAIL [k] name key=value ...`` line."""
    parts = [f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items()]
    line = " ".join([("PASS" if ok else "FAIL"), f"[{criterion}]", name] + parts)
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
