import numpy as np
import pytest

from mixedmg import build_multilevel

EPS64 = float(np.finfo(np.float64).eps)


@pytest.fixture(scope="session")
def level15():
    return build_multilevel(15, 2)[0]


@pytest.fixture(scope="session")
def level31():
    return build_multilevel(31, 2)[0]


@pytest.fixture(scope="session")
def level63():
    return build_multilevel(63, 2)[0]


@pytest.fixture(scope="session")
def levels31_3():
    return build_multilevel(31, 3)
