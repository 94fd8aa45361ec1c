"""Realism and fidelity metrics.

KLD compares intensity distributions (or distributions of local residuals)
between two clips; PSNR and SSIM measure fidelity against a reference; the
max-difference measure compares two blurred renderings of the same frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .errors import DimensionMismatchError, ValidationError
from .video import VideoTensor, check_same_shape

HIST_BINS = 256
RESIDUAL_LIMIT = 0.25
# probability floor for empty q bins on p's support
KLD_FLOOR = 1e-8

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True, eq=False)
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.array(self.bin_edges, dtype=np.float64)
        counts = np.array(self.counts, dtype=np.int64)
        if edges.ndim != 1 or counts.ndim != 1 or len(edges) != len(counts) + 1:
            raise ValidationError("histogram needs len(bin_edges) == len(counts) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValidationError("histogram edges must be strictly increasing")
        if np.any(counts < 0) or counts.sum() == 0:
            raise ValidationError("histogram counts must be non-negative with a positive total")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @classmethod
    def from_masses(cls, masses, bin_edges=None, total: int = 10**12) -> Histogram:
        """Histogram with the given probabilities (counts scaled by ``total``)."""
        m = np.asarray(masses, dtype=np.float64)
        if bin_edges is None:
            bin_edges = np.linspace(0.0, 1.0, len(m) + 1)
        return cls(bin_edges, np.rint(m / m.sum() * total).astype(np.int64))


def _histogram(values: np.ndarray, lo: float, hi: float, bins: int) -> Histogram:
    edges = np.linspace(lo, hi, bins + 1)
    # out-of-range values land in the end bins
    counts, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
    return Histogram(edges, counts)


def intensity_histogram(v: VideoTensor, bins: int = HIST_BINS) -> Histogram:
    """Per-pixel intensities over all frames and channels, uniform bins on [0, 1]."""
    return _histogram(v.data.ravel(), 0.0, 1.0, bins)


def local_residuals(v: VideoTensor) -> np.ndarray:
    """Each pixel minus its 3x3 mean, per plane (replicate borders)."""
    planes = v.data.reshape(-1, *v.shape[-2:])
    smooth = np.stack([ndimage.uniform_filter(p, 3, mode="nearest") for p in planes])
    return (planes - smooth).reshape(v.shape)


def residual_histogram(v: VideoTensor, bins: int = HIST_BINS, limit: float = RESIDUAL_LIMIT) -> Histogram:
    """Distribution of high-pass residuals on [-limit, limit]; isolates the noise texture."""
    return _histogram(local_residuals(v).ravel(), -limit, limit, bins)


HISTOGRAM_MODES = {"intensity": intensity_histogram, "residual": residual_histogram}


def kld(p: Histogram, q: Histogram, floor: float = KLD_FLOOR) -> float:
    """KL(p || q) = sum p_i ln(p_i / q_i) over bins with p_i > 0, in nats.

    Bins where p has mass but q has less than ``floor`` are raised to
    ``floor`` and q is renormalized; bins where q already has at least that
    mass are untouched, so kld(p, p) is exactly 0.
    """
    if p.bin_edges.shape != q.bin_edges.shape or not np.array_equal(p.bin_edges, q.bin_edges):
        raise ValidationError("kld operands must share identical bin edges")
    pm, qm = p.masses, q.masses
    support = pm > 0
    qm = np.where(support & (qm < floor), floor, qm)
    qm = qm / qm.sum()
    d = float(np.sum(pm[support] * np.log(pm[support] / qm[support])))
    # Gibbs' inequality; guards against -1e-17 style rounding
    return max(d, 0.0)


def kld_video(a: VideoTensor, b: VideoTensor, mode: str = "intensity", bins: int = HIST_BINS) -> float:
    """KL divergence between the histograms of two clips (a is p, b is q)."""
    if mode not in HISTOGRAM_MODES:
        raise ValidationError(f"unknown KLD mode {mode!r}; choose from {sorted(HISTOGRAM_MODES)}")
    build = HISTOGRAM_MODES[mode]
    return kld(build(a, bins), build(b, bins))


def _pair(a: VideoTensor, b: VideoTensor) -> tuple[np.ndarray, np.ndarray]:
    check_same_shape(a, b)
    if a.colorspace is not b.colorspace:
        raise ValidationError(f"colorspace mismatch: {a.colorspace.value} vs {b.colorspace.value}")
    return a.data, b.data


def mse(a: VideoTensor, b: VideoTensor) -> float:
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


def psnr(a: VideoTensor, b: VideoTensor) -> float:
    """10 log10(1 / MSE) for peak value 1; identical inputs give +inf."""
    err = mse(a, b)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_map(x: np.ndarray, y: np.ndarray, window: np.ndarray, c1: float, c2: float) -> np.ndarray:
    def filt(img):
        return signal.correlate2d(img, window, mode="valid")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(a: VideoTensor, b: VideoTensor, data_range: float = 1.0) -> float:
    """Mean windowed SSIM over all valid 11x11 windows and all frames.

    Frames are reduced to grayscale by averaging channels.  Gaussian window
    (sigma 1.5), C1 = (0.01 L)^2, C2 = (0.03 L)^2.
    """
    x, y = _pair(a, b)
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise DimensionMismatchError(f"frames of {x.shape[-2]}x{x.shape[-1]} are smaller than the SSIM window")
    gx, gy = x.mean(axis=1), y.mean(axis=1)
    window = gaussian_window()
    c1, c2 = (SSIM_K1 * data_range) ** 2, (SSIM_K2 * data_range) ** 2
    maps = [_ssim_map(fx, fy, window, c1, c2) for fx, fy in zip(gx, gy)]
    return float(np.mean(maps))


def max_intensity_diff(a: VideoTensor, b: VideoTensor, value_range: float = 1.0) -> float:
    """max |a - b| as a percentage of the value range."""
    check_same_shape(a, b)
    if value_range <= 0:
        raise ValidationError("value_range must be positive")
    return 100.0 * float(np.max(np.abs(a.data - b.data))) / value_range


METRICS = ("psnr", "ssim", "kld", "maxdiff")


def evaluate_pair(a: VideoTensor, b: VideoTensor, metrics=METRICS, kld_mode: str = "intensity") -> dict:
    """Metric record for one pair; ``b`` is the reference (q for KLD)."""
    out = {}
    for name in metrics:
        if name == "psnr":
            out["psnr"] = psnr(a, b)
        elif name == "ssim":
            out["ssim"] = ssim(a, b)
        elif name == "kld":
            out["kld"] = kld_video(a, b, kld_mode)
        elif name == "maxdiff":
            out["maxdiff"] = max_intensity_diff(a, b)
        else:
            raise ValidationError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")
    return out
