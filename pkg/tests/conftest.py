import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
DEPLOY_LOWER = np.array([-30.0, -20.0, -10.0])
DEPLOY_UPPER = np.array([30.0, 20.0, 10.0])
DEPLOY_DTH = 4.472


def random_spd(rng, n=3, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + 0.1 * np.eye(n))


def random_centered(rng, n=6, spread=(30.0, 20.0, 10.0)):
    pos = rng.uniform(-1, 1, size=(n, 3)) * np.asarray(spread)
    return pos - pos.mean(axis=0)


finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)


@st.composite
def spd3(draw, lo=0.05, hi=50.0):
    """SPD 3x3 built from a random rotation and bounded eigenvalues."""
    lam = draw(arrays(np.float64, 3, elements=st.floats(lo, hi)))
    m = draw(arrays(np.float64, (3, 3), elements=st.floats(-1, 1)))
    q, r = np.linalg.qr(m + 3 * np.eye(3))
    return (q * lam) @ q.T


@st.composite
def centered_sets(draw, n_min=4, n_max=10):
    n = draw(st.integers(n_min, n_max))
    pos = draw(arrays(np.float64, (n, 3), elements=st.floats(-30, 30)))
    pos = pos - pos.mean(axis=0)
    return pos


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, filled by test_acceptance.report and echoed at session end
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
