import numpy as np
import pytest

from gmwb.contract import ContractSpec
from gmwb.market_models import BsmParams, MmmParams


@pytest.fixture
def bsm():
    return BsmParams(0.2)


@pytest.fixture
def mmm():
    return MmmParams(alpha0=0.05, eta=0.0435)


@pytest.fixture
def toy_spec():
    """Two-date contract: W0 = A0 = 1, G = 0.5, beta = 0.1."""
    return ContractSpec((0.0, 1.0, 2.0), (0.5, 0.5), 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def synthetic_mmm_series(seed=0, start="1950-01", end="1966-12", params=None, y0=1.0):
    """Monthly discounted index simulated from the exact MMM law."""
    from gmwb.market_models import ModelKind, RiskFactorState, mmm_index_level, simulate_paths
    from gmwb.series import PriceSeries, year_fraction

    params = params or MmmParams(alpha0=0.05, eta=0.0435)
    months = np.arange(np.datetime64(start, "M"), np.datetime64(end, "M") + 1)
    dates = months.astype("datetime64[D]")
    t = year_fraction(dates[0], dates)
    y = simulate_paths(params, RiskFactorState(ModelKind.MMM, y0, 0.0), t[1:], 1, seed)[0]
    return PriceSeries.from_dates(dates, mmm_index_level(params, y, t), source="synthetic-mmm")


@pytest.fixture(scope="session")
def synthetic_series():
    return synthetic_mmm_series(seed=11)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
