import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from siamseg import FixtureSpec, PatchGrid, synthesize_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def grid8():
    return PatchGrid.from_grid(8, 8, 16)


@pytest.fixture
def two_block(grid8):
    """Noise-free two-block fixture: (feature_map, planted mask)."""
    return synthesize_fixture(FixtureSpec(grid8, dim=16, block_count=2, seed=7))
