import pathlib

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60)
settings.load_profile("repo")

DATA = pathlib.Path(__file__).parent / "data"
ROOT = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def config_dir():
    return ROOT / "configs"


def random_phantom_values(rng, grid, jumps):
    """Piecewise-constant values with ``jumps`` jumps at random cell boundaries."""
    cuts = np.sort(rng.choice(np.arange(1, grid.n), size=jumps, replace=False))
    levels = rng.uniform(-1.0, 1.0, size=jumps + 1)
    return np.repeat(levels, np.diff(np.concatenate([[0], cuts, [grid.n]])))


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    """Remember the outcome of one acceptance criterion for the summary."""
    ACCEPTANCE[number] = (title, bool(passed), detail)
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}: {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}: {detail}")
