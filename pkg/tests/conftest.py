import numpy as np
import pytest

from finsler_liouville import (DiagonalGauge, EuclideanGauge, PNormGauge,
                               SmoothedPNormGauge)
from finsler_liouville.wulff import WulffGeometry


@pytest.fixture(scope="session")
def euclid2():
    return EuclideanGauge(2)


@pytest.fixture(scope="session")
def euclid3():
    return EuclideanGauge(3)


@pytest.fixture(scope="session")
def diag14():
    return DiagonalGauge([1.0, 4.0])


@pytest.fixture(scope="session")
def pnorm4():
    return PNormGauge(4.0, 2)


@pytest.fixture(scope="session")
def smooth_p3():
    return SmoothedPNormGauge(3.0, 0.15, 2)


@pytest.fixture(scope="session")
def geom_euclid2(euclid2):
    return WulffGeometry(euclid2)


@pytest.fixture(scope="session")
def geom_diag14(diag14):
    return WulffGeometry(diag14)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
