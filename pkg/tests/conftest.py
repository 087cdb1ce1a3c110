import pytest
from hypothesis import HealthCheck, settings

from qpspec.arithmetic import golden, sqrt2m1
from qpspec.potential import amo_potential

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def gold():
    return golden()


@pytest.fixture(scope="session")
def silver():
    return sqrt2m1()


@pytest.fixture(scope="session")
def amo():
    return amo_potential


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        terminalreporter.write_line(ACCEPTANCE[key])


_BANDS = {}


def amo_bands(lam: float, q: int = 233):
    """Approximant bands of the golden-mean AMO at denominator q (cached)."""
    from qpspec.spectrum import approximant_bands

    key = (lam, q)
    if key not in _BANDS:
        f = golden()
        p = f.p[f.q.index(q)]
        _BANDS[key] = approximant_bands(amo_potential(lam), (p, q))
    return _BANDS[key]


def band_midpoints(lam: float, count: int, q: int = 233):
    """Midpoints of the ``count`` widest bands, sorted by energy."""
    import numpy as np

    iv = amo_bands(lam, q).intervals
    widest = np.argsort(-(iv[:, 1] - iv[:, 0]), kind="stable")[:count]
    return np.sort(iv[widest].mean(axis=1))
