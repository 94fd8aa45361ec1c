import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from lowlightsim.blur import (
    SIGMA_MIN,
    BlurKernel,
    build_mvg_kernel,
    build_reference_kernel,
    canonical_blur,
    convolve,
    covariance_matrix,
    delta_kernel,
    ellipse_from_covariance,
    fit_kernel_moments,
    kernel_moments,
    line_weights,
    matched_mvg_params,
    mvg_weights,
    precision_matrix,
)
from lowlightsim.errors import ColorspaceError, DimensionMismatchError, ValidationError
from lowlightsim.video import linear_video


def brute_convolve(img, w):
    """Double loop with explicit edge replication; the independent oracle."""
    k = w.shape[0] // 2
    rows, cols = img.shape
    out = np.zeros_like(img)
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for a in range(-k, k + 1):
                for b in range(-k, k + 1):
                    ii = min(max(i - a, 0), rows - 1)
                    jj = min(max(j - b, 0), cols - 1)
                    acc += w[a + k, b + k] * img[ii, jj]
            out[i, j] = acc
    return out


def gauss_1d(sigma, k):
    x = np.arange(-k, k + 1)
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g


def test_isotropic_kernel_is_separable_gaussian():
    h = build_mvg_kernel(1.0, 1.0, 0.0)
    g = gauss_1d(1.0, 3)
    expected = np.outer(g, g) / np.outer(g, g).sum()
    assert h.radius == 3
    assert_allclose(h.weights, expected, atol=1e-15)


def test_axis_aligned_kernel_is_separable():
    h = build_mvg_kernel(2.0, 0.5, 0.0)
    k = h.radius
    expected = np.outer(gauss_1d(0.5, k), gauss_1d(2.0, k))  # rows follow y, columns x
    assert_allclose(h.weights, expected / expected.sum(), atol=1e-15)


@pytest.mark.parametrize("sx, sy, th", [(1.0, 1.0, 0.0), (3.0, 0.5, 0.3), (0.4, 2.5, 2.0), (4.0, 4.0, 1.0)])
def test_normalized_symmetric_and_radius(sx, sy, th):
    h = build_mvg_kernel(sx, sy, th)
    assert abs(h.weights.sum() - 1) < 1e-12
    assert h.radius == max(1, math.ceil(3 * max(sx, sy)))
    assert_allclose(h.weights, h.weights[::-1, ::-1], atol=1e-17)


def test_quarter_turn_swaps_axes():
    a = build_mvg_kernel(2.0, 0.7, math.pi / 2).weights
    b = build_mvg_kernel(0.7, 2.0, 0.0).weights
    assert_allclose(a, b, atol=1e-15)


def test_major_axis_follows_theta():
    # 45 degrees: spread lies along the main diagonal (x and y grow together)
    h = build_mvg_kernel(3.0, 0.5, math.pi / 4)
    cov = kernel_moments(h.weights)
    assert cov[0, 1] > 0
    assert_allclose(cov[0, 0], cov[1, 1], rtol=1e-9)


def test_precision_is_inverse_covariance():
    c = covariance_matrix(2.0, 0.5, 1.1)
    assert_allclose(precision_matrix(2.0, 0.5, 1.1) @ c, np.eye(2), atol=1e-12)


def test_tiny_sigma_gives_delta():
    h = build_mvg_kernel(SIGMA_MIN / 2, 0.0, 0.3)
    assert_array_equal(h.weights, delta_kernel().weights)


@pytest.mark.parametrize("args", [(-1.0, 1.0, 0.0), (1.0, math.nan, 0.0), (1.0, 1.0, math.inf)])
def test_bad_kernel_parameters(args):
    with pytest.raises(ValidationError):
        build_mvg_kernel(*args)


def test_blur_kernel_contract():
    with pytest.raises(ValidationError):
        BlurKernel(np.ones((2, 2)))
    with pytest.raises(ValidationError):
        BlurKernel(-np.ones((3, 3)))
    h = BlurKernel(np.ones((3, 3)) / 9)
    with pytest.raises(ValueError):
        h.weights[0, 0] = 1.0


def test_convolve_matches_brute_force(rng):
    img = rng.random((2, 1, 13, 17))
    h = build_mvg_kernel(1.3, 0.6, 0.9)
    got = convolve(linear_video(img), h).data
    for t in range(2):
        assert_allclose(got[t, 0], brute_convolve(img[t, 0], h.weights), atol=1e-14)


def test_convolve_asymmetric_kernel_orientation(rng):
    # a one-sided kernel shifts content; checks convolution (not correlation)
    img = rng.random((1, 1, 9, 9))
    w = np.zeros((3, 3))
    w[1, 2] = 1.0
    got = convolve(linear_video(img), BlurKernel(w)).data[0, 0]
    assert_allclose(got, brute_convolve(img[0, 0], w), atol=0)
    assert_allclose(got[:, 1:], img[0, 0, :, :-1])  # weight at +1 column moves content right


def test_convolve_is_linear_in_exposure(small_linear):
    h = build_mvg_kernel(2.0, 1.0, 0.4)
    scaled = convolve(small_linear.with_data(small_linear.data * 2.0**-3.7), h).data
    assert_allclose(scaled, 2.0**-3.7 * convolve(small_linear, h).data, atol=1e-12, rtol=0)


def test_convolve_with_delta_is_identity(small_linear):
    assert convolve(small_linear, delta_kernel()) == small_linear


def test_convolve_preserves_constant():
    v = linear_video(np.full((1, 1, 20, 20), 0.3))
    assert_allclose(convolve(v, build_mvg_kernel(2, 1, 0.2)).data, 0.3, atol=1e-15)


def test_convolve_workers_identical(small_linear):
    h = build_mvg_kernel(1.5, 1.0, 0.4)
    assert convolve(small_linear, h, workers=4) == convolve(small_linear, h)


def test_convolve_contract(small_srgb, small_linear):
    with pytest.raises(ColorspaceError):
        convolve(small_srgb, delta_kernel())
    with pytest.raises(DimensionMismatchError):
        convolve(small_linear, build_mvg_kernel(4.0, 4.0, 0))


def test_ellipse_from_covariance():
    major, minor, angle = ellipse_from_covariance(covariance_matrix(3.0, 1.0, 2.5))
    assert_allclose([major, minor, angle], [3.0, 1.0, 2.5], rtol=1e-12)
    assert ellipse_from_covariance(np.eye(2) * 4) == (2.0, 2.0, 0.0)


def test_canonical_blur_identifies_equivalent_triples():
    assert canonical_blur(1.0, 2.0, 2.0) == pytest.approx(canonical_blur(2.0, 1.0, 2.0 - math.pi / 2))
    a = build_mvg_kernel(1.0, 2.0, 2.0).weights
    b = build_mvg_kernel(*canonical_blur(1.0, 2.0, 2.0)).weights
    assert_allclose(a, b, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(0.5, 4.0), st.floats(0, math.pi, exclude_max=True))
@example(1.0, 0.5, 0.0)  # fitted sigma straddles the radius step at 1
def test_fit_kernel_moments_round_trip(sx, sy, th):
    major, minor, angle = canonical_blur(sx, sy, th)
    fit = fit_kernel_moments(build_mvg_kernel(sx, sy, th))
    assert_allclose(fit[:2], (major, minor), rtol=1e-6)
    if major - minor > 1e-3:
        d = (fit[2] - angle) % math.pi
        assert min(d, math.pi - d) < 1e-5


def test_fit_kernel_moments_degenerate_cases():
    assert fit_kernel_moments(delta_kernel(2)) == (0.0, 0.0, 0.0)
    sx, sy, th = fit_kernel_moments(build_mvg_kernel(1.7, 1.7, 0.0))
    assert_allclose([sx, sy], [1.7, 1.7], rtol=1e-9)
    assert th == 0.0


def test_line_weights_moments():
    # an area-sampled horizontal segment of length 9: uniform over 9 pixels
    w = line_weights(9.0, 0.0)
    row = w[w.shape[0] // 2]
    assert_allclose(row[row > 0], 1 / 9, atol=1e-3)
    assert abs(kernel_moments(w)[0, 0] - (9**2 - 1) / 12) < 0.05


def test_reference_kernel_and_matched_params():
    h = build_reference_kernel(8.0, 0.7, 1.5)
    assert abs(h.weights.sum() - 1) < 1e-12
    assert h.params["kind"] == "reference"
    major, minor, angle = matched_mvg_params(8.0, 0.7, 1.5)
    assert major == pytest.approx(math.sqrt(64 / 12 + 1.5**2))
    assert (minor, angle) == (1.5, 0.7)
    fit = fit_kernel_moments(h)
    assert fit[0] == pytest.approx(major, rel=0.05)
    assert fit[1] == pytest.approx(minor, rel=0.05)
    assert fit[2] == pytest.approx(0.7, abs=0.02)


def test_mvg_weights_custom_radius():
    w = mvg_weights(1.0, 1.0, 0.0, radius=6)
    assert w.shape == (13, 13)
    assert abs(w.sum() - 1) < 1e-12
