import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lowlightsim.blur import build_mvg_kernel, canonical_blur, convolve
from lowlightsim.colorspace import linearize
from lowlightsim.errors import ColorspaceError, DimensionMismatchError, TextureFloorError
from lowlightsim.estimator import (
    EstimationReport,
    angular_distance,
    band_excess,
    bidirectional_angular_distance,
    estimate_blur,
    estimate_exposure,
    estimate_noise,
    estimate_profile,
    orientation_error,
    profile_blur_fields,
    tikhonov_kernel,
)
from lowlightsim.profile import DegradationProfile, validate_profile
from lowlightsim.synthesis import SynthesisRequest, adjust_exposure, degrade
from lowlightsim.video import Colorspace, linear_video


@pytest.fixture(scope="module")
def clean(texture_encoded):
    return linearize(texture_encoded)


def test_angular_distance_table():
    assert angular_distance(0.0, 0.0) == 0.0
    assert angular_distance(math.pi / 2, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert angular_distance(0.0, math.pi) == 2.0
    assert angular_distance(0.3, 1.1) == angular_distance(1.1, 0.3)


def test_bidirectional_distance_and_orientation_error():
    assert bidirectional_angular_distance(0.0, math.pi) == pytest.approx(0.0, abs=1e-15)
    assert bidirectional_angular_distance(0.0, math.pi / 2) == pytest.approx(2.0)
    assert orientation_error(0.05, math.pi - 0.05) == pytest.approx(0.1)
    assert orientation_error(1.0, 1.0 + 3 * math.pi) == pytest.approx(0.0, abs=1e-12)


def test_exposure_from_scaled_clip(clean):
    assert estimate_exposure(adjust_exposure(clean, -3.3), clean) == pytest.approx(-3.3, abs=1e-12)
    # a known additive offset is removed before the ratio
    shifted = clean.with_data(clean.data * 2**-2 + 0.01)
    assert estimate_exposure(shifted, clean, offset=0.01) == pytest.approx(-2, abs=1e-12)


def test_estimation_needs_linear_matching_clips(clean, texture_encoded):
    with pytest.raises(ColorspaceError):
        estimate_exposure(texture_encoded, clean)
    with pytest.raises(DimensionMismatchError):
        estimate_exposure(clean.with_data(clean.data[:2]), clean)


def test_tikhonov_kernel_recovers_noiseless_kernel(clean):
    h = build_mvg_kernel(1.2, 0.6, 0.5)
    blurred = convolve(clean, h).data
    k = tikhonov_kernel(blurred, clean.data, h.radius, reg=1e-6)
    assert np.abs(k - h.weights).max() < 0.02 * h.weights.max()


@pytest.mark.parametrize("sx, sy, th", [(2.0, 0.8, 0.4), (1.0, 3.0, 2.2), (1.5, 1.5, 0.0)])
def test_blur_recovered_from_noiseless_pair(clean, sx, sy, th):
    low = convolve(adjust_exposure(clean, -2), build_mvg_kernel(sx, sy, th))
    est = estimate_blur(low, clean, -2.0)
    major, minor, angle = canonical_blur(sx, sy, th)
    assert_allclose([est.sigma_hx, est.sigma_hy], [major, minor], rtol=1e-4)
    if major != minor:
        assert orientation_error(est.theta_h, angle) < 1e-4
    assert est.gain == pytest.approx(0.25, rel=1e-6)


def test_texture_floor(clean):
    flat = linear_video(np.full(clean.shape, 0.4))
    with pytest.raises(TextureFloorError):
        estimate_blur(flat, flat, 0.0)
    with pytest.raises(TextureFloorError):
        estimate_profile(flat, flat)


def test_noise_regression_with_true_kernel(clean):
    p = DegradationProfile(epsilon=-1.5, sigma_read=0.01, gain_k=0.01, sigma_hx=1.0, sigma_hy=1.0)
    low = degrade(SynthesisRequest(clean, p, 5, Colorspace.LINEAR_RGB))
    est = estimate_noise(low, clean, p.epsilon, build_mvg_kernel(1.0, 1.0, 0.0))
    assert est.gain_k == pytest.approx(0.01, rel=0.1)
    assert est.noise_floor == pytest.approx(1e-4, rel=0.15)
    assert len(est.diagnostics.bin_counts) >= 3


@pytest.mark.parametrize("theta_b", [0, 1])
def test_band_direction_detected(clean, theta_b):
    p = DegradationProfile(epsilon=-1.0, sigma_read=0.002, sigma_band=0.01, theta_band=theta_b, sigma_hx=1, sigma_hy=1)
    low = degrade(SynthesisRequest(clean, p, 2, Colorspace.LINEAR_RGB))
    est = estimate_noise(low, clean, p.epsilon, build_mvg_kernel(1, 1, 0))
    assert est.theta_band == theta_b
    assert est.sigma_band == pytest.approx(0.01, rel=0.25)


def test_band_excess_on_pure_white_noise(rng):
    col, row = band_excess(rng.normal(0, 1, (4, 3, 64, 64)))
    assert abs(col) < 0.01 and abs(row) < 0.01


def test_identical_clips_give_neutral_profile(clean):
    rep = estimate_profile(clean, clean)
    assert_allclose(rep.profile_hat.as_tuple(), DegradationProfile().as_tuple(), atol=1e-12)


def test_full_round_trip(clean):
    p = DegradationProfile(epsilon=-2.5, sigma_read=0.01, gain_k=0.01, sigma_band=0.003, theta_band=1,
                           sigma_hx=2.0, sigma_hy=1.0, theta_h=0.7)
    low = degrade(SynthesisRequest(clean, p, 3, Colorspace.LINEAR_RGB))
    rep = estimate_profile(low, clean)
    q = rep.profile_hat
    assert validate_profile(q) == []
    assert q.epsilon == pytest.approx(p.epsilon, abs=0.1)
    assert q.gain_k == pytest.approx(p.gain_k, rel=0.2)
    assert q.theta_band == 1
    assert_allclose(rep.blur_canonical[:2], (2.0, 1.0), rtol=0.1)
    assert orientation_error(rep.blur_canonical[2], 0.7) < math.radians(5)
    assert rep.noise_floor_hat == pytest.approx(1e-4 + 0.003**2, rel=0.25)


def test_report_json_round_trip(clean):
    low = degrade(SynthesisRequest(clean, DegradationProfile(epsilon=-1, sigma_read=0.01, sigma_hx=1, sigma_hy=1), 1,
                                   Colorspace.LINEAR_RGB))
    rep = estimate_profile(low, clean)
    again = EstimationReport.from_json(rep.to_json())
    assert again == rep
    assert rep.profile_line("x").endswith("\tx")


@pytest.mark.parametrize(
    "angle, expected, projected",
    [(0.3, 0.3, False), (math.pi / 2, math.pi / 2, False), (1.7, math.pi / 2, True), (3.0, 0.0, True)],
)
def test_profile_blur_fields_projection(angle, expected, projected):
    sx, sy, th, flag = profile_blur_fields(2.0, 1.0, angle)
    assert (sx, sy) == (2.0, 1.0)
    assert th == pytest.approx(expected)
    assert flag is projected
    assert validate_profile(DegradationProfile(sigma_hx=sx, sigma_hy=sy, theta_h=th)) == []
