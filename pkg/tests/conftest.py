import numpy as np
import pytest

from doalab import GridSpec, WaveConfig, build_manifold, generate
from doalab.manifold import ManifoldMatrix

WORKED_EXAMPLE = (899, 1802, 2705)


def small_manifold(M=6, R=36, seed=0, V=50.0, layout="uniform_random_2d"):
    g = generate(layout, M, V, seed)
    return build_manifold(g, WaveConfig(), GridSpec(360.0 / R))


def raw_manifold(A: np.ndarray) -> ManifoldMatrix:
    """Wrap an arbitrary complex matrix as a manifold (for non-ideal oracle checks)."""
    A = np.asarray(A, dtype=complex)
    return ManifoldMatrix(A, GridSpec(360.0 / A.shape[1]), WaveConfig(), "raw")


@pytest.fixture(scope="session")
def worked_example_manifold():
    return build_manifold(generate("uniform_random_2d", 16, 8000.0, 0))
