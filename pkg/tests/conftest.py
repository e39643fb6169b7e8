import functools

import numpy as np
import pytest

from mlfetidp.coarse import Multilevel
from mlfetidp.decomposition import build_hierarchy
from mlfetidp.fem import StructuredGrid, assemble_global


@functools.lru_cache(maxsize=None)
def multilevel(L, ratio, constraints="c", backend=None):
    """Cached hierarchy for ``L`` levels with a fixed coarsening ratio."""
    h = build_hierarchy(L, [ratio] * (L - 1))
    problem = assemble_global(StructuredGrid(h.n))
    return Multilevel(problem, h, constraints, backend)


@pytest.fixture(params=["c", "c+e"])
def constraints(request):
    return request.param


@pytest.fixture
def ml2(constraints):
    return multilevel(2, 3, constraints)


@pytest.fixture
def ml3(constraints):
    return multilevel(3, 3, constraints)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance summary --------------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_acceptance(key, passed, detail):
    """Remember one summary line; printed at the end of the session."""
    ACCEPTANCE_LINES[key] = f"{key}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[key])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (len(k.split()[1]), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
