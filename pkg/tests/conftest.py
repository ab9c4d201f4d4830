import numpy as np
import pytest

from plate_surrogates.plate_sim import PlateConfig, TimeSeries, assemble_modal_system


@pytest.fixture(scope="session")
def plate_cfg():
    return PlateConfig()


@pytest.fixture(scope="session")
def modal_sys(plate_cfg):
    return assemble_modal_system(plate_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def linear_series(n, s, seed=0, noise=0.0, offset=0.3):
    """Series whose output is an exact causal FIR of the input (plus optional noise)."""
    r = np.random.default_rng(seed)
    u = r.standard_normal(n)
    w = r.standard_normal(s) * np.exp(-np.arange(s) / max(s / 5, 1))
    y = np.convolve(u, w)[:n] + offset + noise * r.standard_normal(n)
    return TimeSeries(0.0, 1e-3, u, y), w
