import numpy as np
import pytest

from canonical_bomd.model import build_avoided_crossing, from_matrix_function


@pytest.fixture(scope="session")
def crossing():
    return build_avoided_crossing(0.1, 1.0, 10.0)


def rot(theta, i, j, d=3):
    """Stack of plane rotations in the (i, j) plane."""
    theta = np.asarray(theta, dtype=float)
    R = np.broadcast_to(np.eye(d), theta.shape + (d, d)).copy()
    c, s = np.cos(theta), np.sin(theta)
    R[..., i, i] = c
    R[..., j, j] = c
    R[..., i, j] = -s
    R[..., j, i] = s
    return R


def three_level_potential():
    """Well separated 3-level potential whose frame twists in two planes."""

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        R = rot(0.6 * np.arctan(2 * x), 0, 1) @ rot(0.4 * np.sin(1.5 * x), 1, 2)
        lam = np.stack([x * x - 1.0, x * x + 0.5, x * x + 2.0], axis=-1)
        return np.einsum("...ik,...k,...jk->...ij", R, lam, R)

    return from_matrix_function(evaluate, 3, {"kind": "three_level"})


@pytest.fixture(scope="session")
def three_level():
    return three_level_potential()


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, title, passed, detail)``."""

    def record(n, title, passed, detail):
        line = f"criterion {n:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _CRITERIA.append((n, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
