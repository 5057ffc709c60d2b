import numpy as np
import pytest

from ergnn.chebyshev import shift_laplacian
from ergnn.config import ExperimentConfig
from ergnn.graph import build_graph, erdos_renyi_graph, grid_graph, normalized_laplacian


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def grid4():
    return grid_graph(4, 4)


@pytest.fixture
def er50():
    """Connected-enough random graph used for spectral comparisons."""
    return erdos_renyi_graph(50, 0.1, seed=7)


@pytest.fixture
def er50_laplacian(er50):
    return normalized_laplacian(er50)


@pytest.fixture
def er50_shifted(er50_laplacian):
    return shift_laplacian(er50_laplacian)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """Tiny model and short training for fast tests."""
    return ExperimentConfig(
        K1=4, K2=4, mlp_layers=2, mlp_hidden=8, dropout_p=0.0,
        max_epochs=30, patience=10, seeds=[0, 1],
    )
