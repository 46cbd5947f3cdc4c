import math

import pytest

from ablab.numberfield import real_root

LAM = math.sqrt(5) - 2


@pytest.fixture(scope="session")
def alpha():
    """sqrt(5) - 2 as the root of x^2 + 4x - 1 in (1/5, 3/10)."""
    return real_root([-1, 4, 1], ("1/5", "3/10"))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running numerical check")
