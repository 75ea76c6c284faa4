import functools

import numpy as np
import pytest

from stablelbm.equilibrium import PRESETS, BackgroundState
from stablelbm.stability import certify

FEASIBLE_PRESETS = ("preset-1", "preset-2", "preset-3")


@functools.lru_cache(maxsize=None)
def cached_construction(preset: str, rho0: float = 1.0, velocity_set: str = "D3Q33"):
    return certify(BackgroundState(rho0, PRESETS[preset]), velocity_set)


@pytest.fixture(params=FEASIBLE_PRESETS)
def construction(request):
    return cached_construction(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
