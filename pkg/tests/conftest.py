import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from _acceptance_log import RESULTS  # noqa: E402
from covpot.ingest import Dataset  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def linear_data(rng):
    """Heteroscedastic linear data on [0, 1] with a heavy right tail."""
    x = rng.random(200)
    y = 1.0 + 2.0 * x + (0.5 + x) * rng.standard_t(4, 200)
    return Dataset(x, y)


def make_dataset(seed, n, slope=2.0):
    r = np.random.default_rng(seed)
    x = r.random(n)
    return Dataset(x, 1.0 + slope * x + r.standard_t(3, n))


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in RESULTS:
        status = "PASS" if passed is True else ("WARN" if passed is None else "FAIL")
        terminalreporter.write_line(f"{status}  {name}: {detail}")
