"""Physics-based sensor noise: read, shot, quantization and banding.

Every generator draws frame ``t`` from its own sub-stream keyed by
``(t, source)``, so a frame's noise does not depend on which other frames are
generated, or in which order, or on how many threads are used.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .profile import DegradationProfile
from .rng import NoiseSource, SeedSpec, as_seed
from .video import Colorspace, VideoTensor


@dataclass(frozen=True, eq=False)
class NoiseField:
    """Noise samples for one source.

    Banding fields keep their un-broadcast shape (T, C, 1, W) or (T, C, H, 1);
    ``full(shape)`` expands them.
    """

    data: np.ndarray
    source: NoiseSource

    def full(self, shape) -> np.ndarray:
        return np.broadcast_to(self.data, shape)


def _check_shape(shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) != 4 or min(shape) <= 0:
        raise ValidationError(f"noise shape must be 4 positive ints (T, C, H, W), got {shape}")
    return shape


def _check_scale(name, value):
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def _read_frame(rng, frame_shape, sigma_r):
    return sigma_r * rng.standard_normal(frame_shape)


def _quant_frame(rng, frame_shape, lambda_q):
    u = rng.uniform(0.0, lambda_q, frame_shape)
    # lambda * U can round up to lambda itself; keep the support half-open
    return np.minimum(u, np.nextafter(lambda_q, 0.0))


def _band_shape(frame_shape, theta_b):
    c, h, w = frame_shape
    return (c, 1, w) if theta_b == 0 else (c, h, 1)


def _band_frame(rng, frame_shape, sigma_b, theta_b):
    return sigma_b * rng.standard_normal(_band_shape(frame_shape, theta_b))


def _shot_frame(rng, frame, gain_k):
    return gain_k * rng.poisson(frame / gain_k).astype(np.float64)


def read_noise(shape, sigma_r: float, seed: SeedSpec | int) -> NoiseField:
    """i.i.d. N(0, sigma_r^2) over the full (T, C, H, W) shape."""
    shape = _check_shape(shape)
    sigma_r = _check_scale("sigma_r", sigma_r)
    if sigma_r == 0:
        return NoiseField(np.zeros(shape), NoiseSource.READ)
    seed = as_seed(seed)
    data = np.stack([_read_frame(seed.noise_generator(t, NoiseSource.READ), shape[1:], sigma_r) for t in range(shape[0])])
    return NoiseField(data, NoiseSource.READ)


def quantization_noise(shape, lambda_q: float, seed: SeedSpec | int) -> NoiseField:
    """i.i.d. uniform offsets on [0, lambda_q); not zero-mean (mean lambda_q / 2)."""
    shape = _check_shape(shape)
    lambda_q = _check_scale("lambda_q", lambda_q)
    if lambda_q == 0:
        return NoiseField(np.zeros(shape), NoiseSource.QUANTIZATION)
    seed = as_seed(seed)
    data = np.stack(
        [_quant_frame(seed.noise_generator(t, NoiseSource.QUANTIZATION), shape[1:], lambda_q) for t in range(shape[0])]
    )
    return NoiseField(data, NoiseSource.QUANTIZATION)


def banding_noise(shape, sigma_b: float, theta_b: int, seed: SeedSpec | int) -> NoiseField:
    """Row or column offsets.

    theta_b = 0 draws one value per (t, c, column), constant down the rows
    (vertical stripes); theta_b = 1 draws one per (t, c, row).
    """
    shape = _check_shape(shape)
    sigma_b = _check_scale("sigma_b", sigma_b)
    if theta_b not in (0, 1):
        raise ValidationError(f"theta_b must be 0 or 1, got {theta_b!r}")
    t_count, c, h, w = shape
    band_shape = (t_count,) + _band_shape(shape[1:], theta_b)
    if sigma_b == 0:
        return NoiseField(np.zeros(band_shape), NoiseSource.BANDING)
    seed = as_seed(seed)
    data = np.stack(
        [_band_frame(seed.noise_generator(t, NoiseSource.BANDING), shape[1:], sigma_b, theta_b) for t in range(t_count)]
    )
    return NoiseField(data, NoiseSource.BANDING)


def _require_nonnegative(x: VideoTensor, what: str):
    x.require(Colorspace.LINEAR_RGB, what)
    if np.any(x.data < 0):
        raise ValidationError(f"{what} requires non-negative linear intensities")


def apply_shot_noise(x: VideoTensor, gain_k: float, seed: SeedSpec | int) -> VideoTensor:
    """Replace each value by K * Poisson(x / K).

    K = 0 is the infinite-photon limit and returns the input unchanged.
    NumPy's Poisson sampler is exact at every rate (no Gaussian
    approximation).
    """
    _require_nonnegative(x, "shot noise")
    gain_k = _check_scale("gain_k", gain_k)
    if gain_k == 0:
        return x
    seed = as_seed(seed)
    data = np.stack([_shot_frame(seed.noise_generator(t, NoiseSource.SHOT), x.data[t], gain_k) for t in range(x.num_frames)])
    return x.with_data(data)


def _noisy_frame(frame: np.ndarray, t: int, p: DegradationProfile, seed: SeedSpec) -> np.ndarray:
    out = frame
    if p.gain_k > 0:
        out = _shot_frame(seed.noise_generator(t, NoiseSource.SHOT), frame, p.gain_k)
    if p.sigma_read > 0:
        out = out + _read_frame(seed.noise_generator(t, NoiseSource.READ), frame.shape, p.sigma_read)
    if p.lambda_q > 0:
        out = out + _quant_frame(seed.noise_generator(t, NoiseSource.QUANTIZATION), frame.shape, p.lambda_q)
    if p.sigma_band > 0:
        out = out + _band_frame(seed.noise_generator(t, NoiseSource.BANDING), frame.shape, p.sigma_band, p.theta_band)
    return out


def total_noise(x: VideoTensor, p: DegradationProfile, seed: SeedSpec | int, workers: int = 1) -> VideoTensor:
    """Signal with all four noise sources applied.

    Shot noise acts on the signal first; read, quantization and banding are
    then added.  No clipping happens here.  ``out - x`` is the total noise N.
    """
    _require_nonnegative(x, "total_noise")
    for name in ("sigma_read", "gain_k", "lambda_q", "sigma_band"):
        _check_scale(name, getattr(p, name))
    if p.theta_band not in (0, 1):
        raise ValidationError(f"theta_band must be 0 or 1, got {p.theta_band!r}")
    if p.gain_k == 0 and p.sigma_read == 0 and p.lambda_q == 0 and p.sigma_band == 0:
        return x
    seed = as_seed(seed)
    frames = range(x.num_frames)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda t: _noisy_frame(x.data[t], t, p, seed), frames))
    else:
        out = [_noisy_frame(x.data[t], t, p, seed) for t in frames]
    return x.with_data(np.stack(out))


def noise_components(x: VideoTensor, p: DegradationProfile, seed: SeedSpec | int) -> dict[str, np.ndarray]:
    """Per-source noise maps that ``total_noise`` would add, for inspection.

    Uses the same sub-streams, so the maps sum to ``total_noise(x) - x`` up to
    floating-point summation order.
    """
    seed = as_seed(seed)
    shape = x.shape
    shot = apply_shot_noise(x, p.gain_k, seed).data - x.data
    return {
        "shot": shot,
        "read": read_noise(shape, p.sigma_read, seed).data,
        "quantization": quantization_noise(shape, p.lambda_q, seed).data,
        "banding": np.array(banding_noise(shape, p.sigma_band, p.theta_band, seed).full(shape)),
    }
