import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wehlerlab import geometry as geo  # noqa: E402
from wehlerlab import kummer as km  # noqa: E402


@pytest.fixture(scope="session")
def lemniscatic():
    """The Kummer model of y^2 = 4x^3 - 4x (j = 1728)."""
    return km.kummer_coeffs(km.EllipticCurve(4, 0), seed=1)


@pytest.fixture(scope="session")
def generic():
    return geo.SurfaceCoeffs.random(seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
