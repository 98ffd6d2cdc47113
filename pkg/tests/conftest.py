import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skgsim import ExperimentConfig, build_scenario


@pytest.fixture(scope="session")
def desk_config():
    """Small grid keeping the Cholesky factor cheap for unit tests."""
    return ExperimentConfig(nx=20, ny=20, seed=0)


@pytest.fixture(scope="session")
def desk_scenario(desk_config):
    return build_scenario(desk_config)


@pytest.fixture(scope="session")
def desk_partition(desk_scenario):
    return desk_scenario.partition()


def gain_map_from_values(m_values, kappa=1.0, grid=None, role="eve"):
    """Hand-built GainMap with prescribed expected gains (for synthetic tests)."""
    from skgsim import GainMap, PositionGrid, ReceiverConfig
    from skgsim.channel import expected_gain_factor

    m_values = np.asarray(m_values, dtype=float)
    n = m_values.size
    if grid is None:
        grid = PositionGrid(nx=n, ny=1, spacing=10.0, altitude=10.0)
    factor = expected_gain_factor(kappa)
    g = m_values / factor
    receiver = ReceiverConfig(role=role, position=(1e6, 1e6, 0.0), sigma_sh_db=1.0, d_ref_m=20.0)
    return GainMap(
        receiver=receiver,
        grid=grid,
        a_pl_db=np.zeros(n),
        a_sh_db=np.zeros(n),
        g=g,
        m=m_values.copy(),
        kappa=kappa,
    )
