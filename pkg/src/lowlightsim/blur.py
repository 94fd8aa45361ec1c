"""Blur kernels and kernel application.

Kernel coordinates: ``weights[i, j]`` sits at offset ``(x, y) = (j - k, i - k)``
from the centre, so x runs along columns and y down the rows.  An orientation
``theta`` rotates the kernel x-axis from +x towards +y.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, signal

from .errors import DimensionMismatchError, ValidationError
from .video import Colorspace, VideoTensor

SIGMA_MIN = 1e-3
TRUNCATE = 3.0
# below this total variance (px^2) a kernel is treated as a delta
DEGENERATE_VARIANCE = 1e-10
ISOTROPY_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class BlurKernel:
    weights: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 != 1:
            raise ValidationError(f"kernel must be square with odd size, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValidationError("kernel weights must be finite")
        if np.any(w < 0):
            raise ValidationError("kernel weights must be non-negative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _check_sigma(name, value):
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValidationError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def kernel_grid(radius: int) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    y, x = np.meshgrid(offsets, offsets, indexing="ij")
    return x, y


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def covariance_matrix(sigma_hx: float, sigma_hy: float, theta_h: float) -> np.ndarray:
    r = rotation(theta_h)
    return r @ np.diag([sigma_hx**2, sigma_hy**2]) @ r.T


def precision_matrix(sigma_hx: float, sigma_hy: float, theta_h: float) -> np.ndarray:
    # built from the rotated diagonal form; never inverts the covariance
    r = rotation(theta_h)
    return r @ np.diag([sigma_hx**-2, sigma_hy**-2]) @ r.T


def delta_kernel(radius: int = 1) -> BlurKernel:
    w = np.zeros((2 * radius + 1, 2 * radius + 1))
    w[radius, radius] = 1.0
    return BlurKernel(w, {"kind": "delta"})


def mvg_radius(sigma_hx: float, sigma_hy: float) -> int:
    return max(1, math.ceil(TRUNCATE * max(sigma_hx, sigma_hy)))


def mvg_weights(sigma_hx: float, sigma_hy: float, theta_h: float, radius: int | None = None) -> np.ndarray:
    """Normalized elliptical Gaussian on a (2k+1)^2 grid (no validation)."""
    if max(sigma_hx, sigma_hy) < SIGMA_MIN:
        k = 1 if radius is None else radius
        w = np.zeros((2 * k + 1, 2 * k + 1))
        w[k, k] = 1.0
        return w
    sx, sy = max(sigma_hx, SIGMA_MIN), max(sigma_hy, SIGMA_MIN)
    k = mvg_radius(sx, sy) if radius is None else radius
    x, y = kernel_grid(k)
    p = precision_matrix(sx, sy, theta_h)
    q = p[0, 0] * x * x + 2.0 * p[0, 1] * x * y + p[1, 1] * y * y
    w = np.exp(-0.5 * q)
    return w / w.sum()


def build_mvg_kernel(sigma_hx: float, sigma_hy: float, theta_h: float) -> BlurKernel:
    """Joint motion/defocus kernel: a single rotated bivariate Gaussian.

    The support radius is ceil(3 * max(sigma)), at least 1.  Spreads below
    ``SIGMA_MIN`` on both axes give the delta kernel.
    """
    sigma_hx = _check_sigma("sigma_hx", sigma_hx)
    sigma_hy = _check_sigma("sigma_hy", sigma_hy)
    theta_h = float(theta_h)
    if not math.isfinite(theta_h):
        raise ValidationError(f"theta_h must be finite, got {theta_h!r}")
    if max(sigma_hx, sigma_hy) < SIGMA_MIN:
        return delta_kernel(1)
    params = {"kind": "mvg", "sigma_hx": sigma_hx, "sigma_hy": sigma_hy, "theta_h": theta_h}
    return BlurKernel(mvg_weights(sigma_hx, sigma_hy, theta_h), params)


def line_weights(length: float, angle: float, samples_per_px: int = 1000) -> np.ndarray:
    """Zero-width segment centred on the origin, area-sampled onto pixels.

    Each pixel receives the length of segment that falls inside it, which is
    approximated by dense midpoint sampling along the segment.
    """
    if length <= 0:
        return np.ones((1, 1))
    n = max(1, math.ceil(length * samples_per_px))
    t = (np.arange(n) + 0.5) / n * length - 0.5 * length
    px = np.rint(t * math.cos(angle)).astype(int)
    py = np.rint(t * math.sin(angle)).astype(int)
    k = int(max(np.abs(px).max(), np.abs(py).max()))
    w = np.zeros((2 * k + 1, 2 * k + 1))
    np.add.at(w, (py + k, px + k), 1.0)
    return w / w.sum()


def build_reference_kernel(motion_len: float, motion_angle: float, defocus_sigma: float) -> BlurKernel:
    """Traditional composite PSF: linear-motion line convolved with a defocus Gaussian."""
    motion_len = _check_sigma("motion_len", motion_len)
    defocus_sigma = _check_sigma("defocus_sigma", defocus_sigma)
    motion_angle = float(motion_angle)
    if not math.isfinite(motion_angle):
        raise ValidationError("motion_angle must be finite")
    w = line_weights(motion_len, motion_angle)
    if defocus_sigma >= SIGMA_MIN:
        w = signal.convolve2d(w, mvg_weights(defocus_sigma, defocus_sigma, 0.0))
    if w.shape[0] < 3:
        w = np.pad(w, 1)
    params = {"kind": "reference", "motion_len": motion_len, "motion_angle": motion_angle, "defocus_sigma": defocus_sigma}
    return BlurKernel(w / w.sum(), params)


def matched_mvg_params(motion_len: float, motion_angle: float, defocus_sigma: float) -> tuple[float, float, float]:
    """Second-moment match of the composite PSF.

    A uniform segment of length L has variance L^2 / 12 along its axis; the
    defocus Gaussian adds its variance isotropically.
    """
    major = math.sqrt(motion_len**2 / 12.0 + defocus_sigma**2)
    return major, defocus_sigma, motion_angle % math.pi


def _convolve_frame(frame: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return ndimage.convolve(frame, weights, mode="nearest")


def convolve(v: VideoTensor, h: BlurKernel, workers: int = 1) -> VideoTensor:
    """Per-frame, per-channel 2-D convolution with replicate padding."""
    v.require(Colorspace.LINEAR_RGB, "convolve")
    _, _, rows, cols = v.shape
    if h.size > rows or h.size > cols:
        raise DimensionMismatchError(f"kernel of size {h.size} does not fit frames of {rows}x{cols}")
    planes = v.data.reshape(-1, rows, cols)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(lambda f: _convolve_frame(f, h.weights), planes))
    else:
        out = [_convolve_frame(f, h.weights) for f in planes]
    return v.with_data(np.stack(out).reshape(v.shape))


# ---------------------------------------------------------------------------
# moment fitting
# ---------------------------------------------------------------------------

def kernel_moments(weights: np.ndarray) -> np.ndarray:
    """Central second-moment matrix [[Cxx, Cxy], [Cxy, Cyy]] of a kernel."""
    w = np.asarray(weights, dtype=np.float64)
    x, y = kernel_grid(w.shape[0] // 2)
    m = w.sum()
    mx, my = (w * x).sum() / m, (w * y).sum() / m
    dx, dy = x - mx, y - my
    cxx = (w * dx * dx).sum() / m
    cyy = (w * dy * dy).sum() / m
    cxy = (w * dx * dy).sum() / m
    return np.array([[cxx, cxy], [cxy, cyy]])


def ellipse_from_covariance(cov: np.ndarray) -> tuple[float, float, float]:
    """(major sigma, minor sigma, major-axis angle in [0, pi)); angle 0 if isotropic."""
    evals, evecs = np.linalg.eigh(cov)
    lo, hi = max(evals[0], 0.0), max(evals[1], 0.0)
    if hi - lo <= ISOTROPY_RTOL * max(hi, 1e-300):
        s = math.sqrt(0.5 * (lo + hi))
        return s, s, 0.0
    vx, vy = evecs[:, 1]
    angle = math.atan2(vy, vx) % math.pi
    if angle >= math.pi:
        angle = 0.0
    return math.sqrt(hi), math.sqrt(lo), angle


def canonical_blur(sigma_hx: float, sigma_hy: float, theta_h: float) -> tuple[float, float, float]:
    """Geometry-only form (major, minor, major-axis angle mod pi) of a blur triple."""
    if sigma_hx >= sigma_hy:
        return sigma_hx, sigma_hy, theta_h % math.pi
    return sigma_hy, sigma_hx, (theta_h + math.pi / 2) % math.pi


def fit_kernel_moments(h: BlurKernel, max_iter: int = 100, tol: float = 1e-12) -> tuple[float, float, float]:
    """Recover (sigma_hx, sigma_hy, theta_h) from a kernel's second moments.

    Returned in canonical form: sigma_hx is the major spread and theta_h the
    major-axis angle in [0, pi) (0 for isotropic kernels).  A kernel sampled
    on the pixel grid and truncated at 3 sigma has smaller second moments than
    the continuous Gaussian (about 14% low in variance at sigma = 0.5), so the
    raw moment matrix is only the starting point: the covariance is then
    corrected until ``mvg_weights`` of the estimate reproduces the observed
    moments.  The model kernels use the observed support rather than their
    own 3-sigma radius, which would jump as the estimate crosses a boundary.
    """
    w = np.clip(h.weights, 0.0, None)
    if w.sum() <= 0:
        return 0.0, 0.0, 0.0
    observed = kernel_moments(w)
    if np.trace(observed) < DEGENERATE_VARIANCE:
        return 0.0, 0.0, 0.0

    cov = observed.copy()
    best = ellipse_from_covariance(cov)
    best_err = math.inf
    scale = np.trace(observed)
    for _ in range(max_iter):
        params = ellipse_from_covariance(cov)
        model = kernel_moments(mvg_weights(*params, radius=h.radius))
        err = np.abs(model - observed).max()
        if err < best_err:
            best, best_err = params, err
        if err <= tol * scale:
            break
        # pixel sampling compresses small variances; take larger steps there
        gain = np.clip(np.trace(cov) / max(np.trace(model), 1e-300), 1.0, 50.0)
        cov = cov + gain * (observed - model)
        evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
        cov = evecs @ np.diag(np.maximum(evals, SIGMA_MIN**2)) @ evecs.T
    return best
