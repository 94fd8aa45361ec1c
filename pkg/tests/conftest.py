import numpy as np
import pytest

from lowlightsim.patterns import block_texture
from lowlightsim.profile import DegradationProfile
from lowlightsim.video import linear_video, srgb_video


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_srgb(rng):
    """3 frames, 3 channels, 24x32, values strictly inside (0, 1)."""
    return srgb_video(rng.uniform(0.05, 0.95, (3, 3, 24, 32)))


@pytest.fixture
def small_linear(rng):
    return linear_video(rng.uniform(0.05, 0.95, (3, 3, 24, 32)))


@pytest.fixture(scope="session")
def texture_encoded():
    return block_texture(frames=3, height=64, width=64, seed=7)


@pytest.fixture
def full_profile():
    return DegradationProfile(
        epsilon=-2.0,
        sigma_read=0.01,
        gain_k=0.005,
        lambda_q=1 / 255,
        sigma_band=0.004,
        theta_band=1,
        sigma_hx=1.5,
        sigma_hy=0.7,
        theta_h=0.6,
    )
