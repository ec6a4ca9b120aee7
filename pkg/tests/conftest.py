import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ncspred.bench import X0, pendulum  # noqa: E402
from ncspred.model import DelayProfile, Gain, LtiPlant  # noqa: E402


@pytest.fixture(scope="session")
def pend():
    return pendulum()


@pytest.fixture(scope="session")
def plant(pend):
    return pend[0]


@pytest.fixture(scope="session")
def gain(pend):
    return pend[1]


@pytest.fixture
def x0():
    return X0.copy()


@pytest.fixture(scope="session")
def profile_both():
    """Both networks: r0 = r1 = 0.2, eta_max = mu_max = 0.01 (h filled per test)."""
    return DelayProfile(0.2, 0.2, 0.01, 0.01, 0.0369)


@pytest.fixture
def scalar():
    def make(a, b=1.0, k=None):
        p = LtiPlant([[a]], [[b]])
        return p, None if k is None else Gain([[k]])

    return make


def random_system(rng, n=4, m=1, scale=1.0):
    A = rng.normal(size=(n, n)) * scale
    B = rng.normal(size=(n, m))
    return LtiPlant(A, B)


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
