import json
from pathlib import Path

import numpy as np
import pytest

from sunprobit import SunParams

ORACLES = Path(__file__).with_name("oracles") / "values.json"

# filled by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = {}


def random_sun(p, n, rng, skew=1.0):
    """A valid SUN_{p,n}: a random correlation matrix split into blocks."""
    A = rng.normal(size=(n + p, n + p))
    C = A @ A.T + 0.5 * (n + p) * np.eye(n + p)
    sd = np.sqrt(np.diag(C))
    C = C / np.outer(sd, sd)
    C[n:, :n] *= skew
    C[:n, n:] *= skew
    w = rng.uniform(0.5, 2.0, size=p)
    return SunParams(
        rng.normal(size=p), C[n:, n:] * np.outer(w, w), C[n:, :n], rng.normal(size=n), C[:n, :n]
    )


def gauss_legendre_box(center, half_widths, order):
    """Tensor Gauss-Legendre nodes and weights on a box."""
    t, w = np.polynomial.legendre.leggauss(order)
    axes = [c + h * t for c, h in zip(center, half_widths)]
    wts = [h * w for h in half_widths]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    W = np.prod(np.meshgrid(*wts, indexing="ij"), axis=0).ravel()
    return pts, W


@pytest.fixture(scope="session")
def oracles():
    return json.loads(ORACLES.read_text())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
