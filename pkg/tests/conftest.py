import numpy as np
import pytest

import deltadual as dd


@pytest.fixture(scope="session")
def ref_surface():
    """Packaged reference surface recentered onto x = S - K, K = 100."""
    return dd.shifted(dd.load_reference_surface(), 100.0)


@pytest.fixture(scope="session")
def ref_backward(ref_surface):
    g = dd.build_clustered_grid(400, -60.0, 60.0, 0.0, 30.0)
    return dd.solve_backward(ref_surface, g, 1.0, 100)


@pytest.fixture(scope="session")
def ref_frame0(ref_backward):
    return dd.frame_from_solution(ref_backward, level=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)
