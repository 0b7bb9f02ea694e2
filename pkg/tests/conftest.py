import numpy as np
import pytest

from cogmac.channels import channels_for_rho


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def twelve_high():
    """N=12 channels at rho=0.8 (fixed draw)."""
    return channels_for_rho(12, 0.8, np.random.default_rng(5))
