import numpy as np
import pytest

from ckntools.catalog import default_entries


@pytest.fixture(scope="session")
def conformal_entries():
    return default_entries()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_report_header(config):
    from ckntools import kernels

    return f"ckntools kernel backend: {kernels.BACKEND}"
