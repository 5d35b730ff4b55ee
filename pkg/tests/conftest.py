import numpy as np
import pytest

from wgelast.mesh import build_square_mesh


@pytest.fixture(scope="session")
def mesh_level2():
    return build_square_mesh(2)


@pytest.fixture(scope="session")
def mesh_level3():
    return build_square_mesh(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def rel_gap(got, want):
    got, want = np.asarray(got), np.asarray(want)
    return float(np.abs(got - want).max() / max(1.0, np.abs(want).max()))
