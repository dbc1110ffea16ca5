import functools

import numpy as np
import pytest

from bohmqhd import scenario
from bohmqhd.lattice import ConfigurationGrid, SortSpec


def one_particle_grid(lo=-16.0, hi=16.0, n=256, mass=1.0, nu=1):
    return ConfigurationGrid.uniform([SortSpec("A", 1, mass)], lo, hi, n, spatial_dim=nu)


@functools.lru_cache(maxsize=None)
def preset_series(name, **over):
    s = scenario.preset(name)
    if over:
        s = s.with_overrides(**over)
    return s, s.series()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rel_l2(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm((a - b).ravel()) / np.linalg.norm(b.ravel()))
