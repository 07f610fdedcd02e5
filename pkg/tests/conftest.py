import numpy as np
import pytest

from pspectra import build_circle, build_icosphere, build_interval


@pytest.fixture(scope="session")
def sphere2():
    return build_icosphere(2)


@pytest.fixture(scope="session")
def sphere3():
    return build_icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return build_icosphere(4)


@pytest.fixture(scope="session")
def sphere5():
    return build_icosphere(5)


@pytest.fixture(scope="session")
def circle400():
    return build_circle(400, 2.0 * np.pi)


@pytest.fixture(scope="session")
def interval1000():
    return build_interval(1000, -1.0, 1.0)
