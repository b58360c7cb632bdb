import numpy as np
import pytest

from btmpv.pipeline import ModelCache
from btmpv.series import DayNightMask
from btmpv.synth import ScenarioConfig, build_panel

SMALL = ScenarioConfig(seed=3, days=60, n_with_pv=20, n_without_pv=25)


@pytest.fixture(scope="session")
def small_cfg():
    return SMALL


@pytest.fixture(scope="session")
def small_panel():
    return build_panel(SMALL)


@pytest.fixture(scope="session")
def mask():
    return DayNightMask()


@pytest.fixture(scope="session")
def model_cache():
    return ModelCache()


@pytest.fixture(scope="session")
def models_iii(model_cache, mask):
    return model_cache.get(SMALL, (90.0, 135.0, 180.0, 225.0, 270.0), mask)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail); filled by test_acceptance and echoed after the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
