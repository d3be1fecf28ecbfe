import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ifindex.builders import BuildConfig, Family

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ALL_VARIANTS = [(fam, learned) for fam in Family for learned in (False, True)]


def variant_id(v):
    fam, learned = v
    return ("IF-" if learned else "") + fam.value


@pytest.fixture(params=ALL_VARIANTS, ids=variant_id)
def variant(request):
    return request.param


def make_cfg(variant, cap=8, **kw):
    fam, learned = variant
    return BuildConfig(fam, learned, cap, **kw)


@pytest.fixture(scope="session")
def dup_points():
    """2k clustered points with exact duplicates and shared coordinates."""
    rng = np.random.default_rng(123)
    base = rng.normal(size=(1800, 2)).astype(np.float32)
    dups = base[rng.integers(0, 1800, 150)]
    grid = np.round(rng.random((50, 2)) * 4) / 4  # coarse grid forces ties per dimension
    return np.vstack([base, dups, grid.astype(np.float32)])


# acceptance lines, repeated in the terminal summary so they survive -q
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
