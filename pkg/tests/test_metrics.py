import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lowlightsim.errors import DimensionMismatchError, ValidationError
from lowlightsim.metrics import (
    Histogram,
    evaluate_pair,
    gaussian_window,
    intensity_histogram,
    kld,
    kld_video,
    max_intensity_diff,
    psnr,
    residual_histogram,
    ssim,
)
from lowlightsim.video import linear_video, srgb_video


def two_bin(a, b):
    return Histogram.from_masses([a, b])


def test_kld_two_bin_hand_value():
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert kld(two_bin(0.5, 0.5), two_bin(0.9, 0.1)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.5108, abs=1e-4)


def test_kld_identity_and_asymmetry():
    p = Histogram([0, 1, 2, 3], [5, 1, 0])
    q = Histogram([0, 1, 2, 3], [1, 1, 4])
    assert kld(p, p) == 0.0
    assert kld(p, q) != pytest.approx(kld(q, p), rel=1e-3)


masses = st.lists(st.integers(0, 1000), min_size=4, max_size=4).filter(lambda c: sum(c) > 0)


@given(masses, masses)
def test_kld_nonnegative(a, b):
    edges = np.arange(5.0)
    assert kld(Histogram(edges, a), Histogram(edges, b)) >= 0.0


def test_kld_floor_handles_empty_q_bins():
    p = Histogram([0, 1, 2], [1, 1])
    q = Histogram([0, 1, 2], [1, 0])
    d = kld(p, q)
    # q' = (1, 1e-8) renormalized
    qn = np.array([1.0, 1e-8]) / (1 + 1e-8)
    assert d == pytest.approx(0.5 * math.log(0.5 / qn[0]) + 0.5 * math.log(0.5 / qn[1]), rel=1e-12)


def test_kld_requires_identical_binning():
    with pytest.raises(ValidationError):
        kld(Histogram([0, 1, 2], [1, 1]), Histogram([0, 1, 3], [1, 1]))


def test_histogram_contract():
    with pytest.raises(ValidationError):
        Histogram([0, 1, 1], [1, 1])
    with pytest.raises(ValidationError):
        Histogram([0, 1], [0])
    h = intensity_histogram(linear_video(np.linspace(-0.5, 1.5, 1000).reshape(1, 1, 10, 100)))
    assert abs(h.masses.sum() - 1) < 1e-9
    assert len(h.counts) == 256 and h.counts[0] > 0 and h.counts[-1] > 0


def test_residual_histogram_of_constant_is_centered():
    h = residual_histogram(linear_video(np.full((1, 1, 8, 8), 0.3)))
    assert h.bin_edges[0] == -0.25 and h.bin_edges[-1] == 0.25
    assert h.counts[128] == 64 or h.counts[127] == 64


def test_kld_video_modes(small_linear):
    assert kld_video(small_linear, small_linear, "intensity") == 0.0
    assert kld_video(small_linear, small_linear, "residual") == 0.0
    with pytest.raises(ValidationError):
        kld_video(small_linear, small_linear, "bogus")


def naive_mse(a, b):
    total, n = 0.0, 0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (x - y) ** 2
        n += 1
    return total / n


def test_psnr_closed_forms_and_oracle(rng):
    a = rng.random((2, 3, 8, 9))
    assert psnr(linear_video(a), linear_video(a)) == math.inf
    b = np.full((1, 1, 4, 4), 0.5)
    assert psnr(linear_video(b), linear_video(b + 0.1)) == pytest.approx(20.0, abs=1e-9)
    c = rng.random(a.shape)
    expected = 10 * math.log10(1 / naive_mse(a, c))
    assert psnr(linear_video(a), linear_video(c)) == pytest.approx(expected, abs=1e-9)


def test_psnr_decreases_with_noise(rng):
    a = rng.random((1, 1, 32, 32))
    noise = rng.standard_normal(a.shape)
    scores = [psnr(linear_video(a), linear_video(a + s * noise)) for s in (0.01, 0.02, 0.04, 0.08, 0.16)]
    assert all(x > y for x, y in zip(scores, scores[1:]))


def test_metric_operand_checks(small_linear, small_srgb):
    with pytest.raises(ValidationError):
        psnr(small_linear, small_srgb)
    with pytest.raises(DimensionMismatchError):
        psnr(small_linear, small_linear.with_data(small_linear.data[:1]))
    with pytest.raises(DimensionMismatchError):
        ssim(linear_video(np.zeros((1, 1, 8, 30))), linear_video(np.zeros((1, 1, 8, 30))))


def scalar_ssim(x, y):
    """Windowed SSIM written pixel by pixel; independent of the vectorized path."""
    g = gaussian_window()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            px, py = x[i : i + 11, j : j + 11], y[i : i + 11, j : j + 11]
            mx, my = (g * px).sum(), (g * py).sum()
            vx = (g * (px - mx) ** 2).sum()
            vy = (g * (py - my) ** 2).sum()
            cxy = (g * (px - mx) * (py - my)).sum()
            vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_ssim_matches_scalar_oracle(rng):
    a = rng.random((1, 1, 32, 32))
    b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
    assert ssim(linear_video(a), linear_video(b)) == pytest.approx(scalar_ssim(a[0, 0], b[0, 0]), abs=1e-6)


def test_ssim_matches_scikit_image(rng):
    from skimage.metrics import structural_similarity

    a = rng.random((1, 1, 40, 48))
    b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
    ref = structural_similarity(
        a[0, 0], b[0, 0], gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0
    )
    assert ssim(linear_video(a), linear_video(b)) == pytest.approx(ref, abs=1e-6)


def test_ssim_properties(rng):
    a = linear_video((rng.random((2, 3, 24, 24)) > 0.5).astype(float))
    b = a.with_data(np.clip(a.data + rng.normal(0, 0.1, a.shape), 0, 1))
    assert ssim(a, a) == 1.0
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert ssim(a, a.with_data(1 - a.data)) < 0


def test_ssim_uses_channel_mean(rng):
    g = rng.random((1, 1, 16, 16))
    rgb = np.repeat(g, 3, axis=1)
    noisy = np.clip(g + rng.normal(0, 0.1, g.shape), 0, 1)
    assert ssim(linear_video(rgb), linear_video(np.repeat(noisy, 3, axis=1))) == pytest.approx(
        ssim(linear_video(g), linear_video(noisy)), abs=1e-12
    )


def test_max_intensity_diff():
    a = np.zeros((1, 1, 4, 4))
    b = a.copy()
    b[0, 0, 2, 1] = 0.04
    assert max_intensity_diff(linear_video(a), linear_video(a)) == 0.0
    assert max_intensity_diff(linear_video(a), linear_video(b)) == pytest.approx(4.0)
    assert max_intensity_diff(linear_video(a), linear_video(b), value_range=2.0) == pytest.approx(2.0)


def test_metrics_invariant_to_frame_order(rng):
    a, b = rng.random((2, 4, 1, 16, 16))
    perm = [2, 0, 3, 1]
    va, vb = linear_video(a), linear_video(b)
    pa, pb = linear_video(a[perm]), linear_video(b[perm])
    for name in ("psnr", "ssim", "kld", "maxdiff"):
        assert evaluate_pair(va, vb, [name])[name] == pytest.approx(evaluate_pair(pa, pb, [name])[name], abs=1e-12)


def test_evaluate_pair_identity(small_srgb):
    rec = evaluate_pair(small_srgb, small_srgb)
    assert rec == {"psnr": math.inf, "ssim": 1.0, "kld": 0.0, "maxdiff": 0.0}
    with pytest.raises(ValidationError):
        evaluate_pair(small_srgb, small_srgb, ["lpips"])
    assert srgb_video(small_srgb.data) == small_srgb
