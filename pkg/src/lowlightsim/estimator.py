"""Calibration-free recovery of a degradation profile from a (low, high) clip pair.

The estimator is classical and needs the clean reference clip.  Stages run in
order, each conditioning the next:

1. exposure   -- ratio of means (blur, shot, read and banding noise all
                 preserve the mean; the quantization offset is removed once
                 it is known)
2. blur       -- Tikhonov-regularised spectral division gives a free-form
                 kernel; its second moments seed a least-squares fit of the
                 three Gaussian kernel parameters against the low clip
3. noise      -- residual variance regressed on the predicted signal level
                 (slope = gain K, intercept = signal-independent floor);
                 banding is separated from row/column-mean excess variance

Read noise and quantization noise are both signal-independent and are not
separable from second moments, so they are reported jointly as the floor;
``profile_hat`` carries the whole floor (minus banding) as read noise and sets
``lambda_q`` to 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .blur import (
    SIGMA_MIN,
    BlurKernel,
    build_mvg_kernel,
    canonical_blur,
    convolve,
    delta_kernel,
    fit_kernel_moments,
    mvg_weights,
)
from .errors import InsufficientRangeError, NumericalError, TextureFloorError, ValidationError
from .profile import HALF_PI, DegradationProfile, ensure_valid, format_profile
from .video import Colorspace, VideoTensor, check_same_shape

TIKHONOV_REG = 1e-2
TEXTURE_FLOOR = 1e-6
MAX_FIT_RADIUS = 15
NOISE_BINS = 32
MIN_BIN_COUNT = 64
# relative cost margin within which a delta kernel is preferred
DELTA_RTOL = 1e-6
NOISELESS_ATOL = 1e-12


def _pair(low: VideoTensor, high: VideoTensor) -> tuple[np.ndarray, np.ndarray]:
    low.require(Colorspace.LINEAR_RGB, "estimation")
    high.require(Colorspace.LINEAR_RGB, "estimation")
    check_same_shape(low, high)
    return low.data, high.data


# ---------------------------------------------------------------------------
# exposure
# ---------------------------------------------------------------------------

def estimate_exposure(low: VideoTensor, high: VideoTensor, offset: float = 0.0) -> float:
    """Exposure change in stops from the ratio of clip means.

    ``offset`` is subtracted from the low-clip mean first; pass the
    quantization offset (lambda_q / 2) once it has been estimated.
    """
    lo, hi = _pair(low, high)
    mean_high = hi.mean()
    if not mean_high > 0:
        raise NumericalError("clean clip has zero mean; exposure is undefined")
    mean_low = lo.mean() - offset
    if not mean_low > 0:
        raise NumericalError("degraded clip mean is not positive after offset removal")
    return math.log2(mean_low / mean_high)


# ---------------------------------------------------------------------------
# blur
# ---------------------------------------------------------------------------

def texture_energy(frames: np.ndarray) -> float:
    """Mean squared finite-difference gradient over all frames and channels."""
    gx = np.diff(frames, axis=-1)
    gy = np.diff(frames, axis=-2)
    return float(0.5 * ((gx**2).mean() + (gy**2).mean()))


def tikhonov_kernel(low: np.ndarray, reference: np.ndarray, radius: int, reg: float = TIKHONOV_REG) -> np.ndarray:
    """Free-form kernel from regularised division of cross- by auto-spectra.

    Spectra are accumulated over every frame and channel, so the result is the
    frame-averaged estimate.  Frames are mean-removed and Hann-tapered to keep
    the periodic boundary of the FFT from dominating; ``reg`` is relative to
    the mean auto-spectrum power.
    """
    rows, cols = low.shape[-2:]
    taper = np.outer(np.hanning(rows), np.hanning(cols))
    x = (reference - reference.mean(axis=(-2, -1), keepdims=True)) * taper
    y = (low - low.mean(axis=(-2, -1), keepdims=True)) * taper
    fx = np.fft.fft2(x)
    fy = np.fft.fft2(y)
    cross = (np.conj(fx) * fy).reshape(-1, rows, cols).sum(axis=0)
    power = (np.abs(fx) ** 2).reshape(-1, rows, cols).sum(axis=0)
    spectrum = cross / (power + reg * power.mean())
    k = np.fft.fftshift(np.real(np.fft.ifft2(spectrum)))
    cy, cx = rows // 2, cols // 2
    k = k[cy - radius : cy + radius + 1, cx - radius : cx + radius + 1]
    k = np.clip(k, 0.0, None)
    total = k.sum()
    if not total > 0:
        return delta_kernel(radius).weights
    return k / total


def _core_of(weights: np.ndarray, frac: float = 0.05) -> np.ndarray:
    # noise in the tails of a deconvolved kernel dominates r^2-weighted moments
    w = np.where(weights >= frac * weights.max(), weights, 0.0)
    return w / w.sum()


class _ReplicateConvolver:
    """Fast convolution of a fixed clip with many candidate kernels.

    The clip is replicate-padded by ``radius`` once and transformed; each
    kernel (radius <= ``radius``) then costs one spectral product and inverse
    transform.  Matches ``blur.convolve`` to floating-point round-off.
    """

    def __init__(self, frames: np.ndarray, radius: int):
        self.radius = radius
        self.rows, self.cols = frames.shape[-2:]
        pad = [(0, 0)] * (frames.ndim - 2) + [(radius, radius), (radius, radius)]
        padded = np.pad(frames, pad, mode="edge")
        self.shape = padded.shape[-2:]
        self.spectrum = np.fft.rfft2(padded)

    def __call__(self, weights: np.ndarray) -> np.ndarray:
        k = weights.shape[0] // 2
        if k > self.radius:
            raise ValidationError("kernel exceeds the convolver radius")
        arr = np.zeros(self.shape)
        arr[: weights.shape[0], : weights.shape[1]] = weights
        arr = np.roll(arr, (-k, -k), axis=(0, 1))
        out = np.fft.irfft2(self.spectrum * np.fft.rfft2(arr), s=self.shape)
        r = self.radius
        return out[..., r : r + self.rows, r : r + self.cols]


def _u_to_sigma(u: float) -> float:
    # u is the weight of a unit step along an axis: exp(-1 / (2 sigma^2))
    if u <= 0:
        return 0.0
    return math.sqrt(-0.5 / math.log(u))


def _sigma_to_u(sigma: float) -> float:
    if sigma <= 0:
        return 0.0
    return math.exp(-0.5 / sigma**2)


@dataclass
class BlurEstimate:
    kernel_hat: BlurKernel
    sigma_hx: float
    sigma_hy: float
    theta_h: float
    gain: float
    offset: float
    initial: tuple = ()
    cost: float = float("nan")

    def __iter__(self):
        # unpacks like the (kernel, sigma_hx, sigma_hy, theta_h) tuple
        return iter((self.kernel_hat, self.sigma_hx, self.sigma_hy, self.theta_h))

    @property
    def model_kernel(self) -> BlurKernel:
        if max(self.sigma_hx, self.sigma_hy) < SIGMA_MIN:
            return delta_kernel(1)
        return build_mvg_kernel(self.sigma_hx, self.sigma_hy, self.theta_h)


def _linear_fit(s0: np.ndarray, y: np.ndarray) -> tuple[float, float, np.ndarray]:
    sm, ym = s0.mean(), y.mean()
    ds = s0 - sm
    den = (ds * ds).sum()
    gain = float((ds * (y - ym)).sum() / den) if den > 0 else 0.0
    offset = float(ym - gain * sm)
    return gain, offset, y - (gain * s0 + offset)


def estimate_blur(
    low: VideoTensor,
    high: VideoTensor,
    epsilon_hat: float,
    reg: float = TIKHONOV_REG,
    radius: int | None = None,
    refine: bool = True,
) -> BlurEstimate:
    """Recover the blur kernel and its (sigma_hx, sigma_hy, theta_h).

    Parameters are returned in canonical form (major spread first, theta the
    major-axis angle in [0, pi)).  With ``refine`` the moment estimate seeds a
    bounded least-squares fit of ``gain * (H(params) * high) + offset`` to the
    low clip, with gain and offset solved in closed form for every candidate
    kernel.
    """
    lo, hi = _pair(low, high)
    rows, cols = lo.shape[-2:]
    if texture_energy(hi) < TEXTURE_FLOOR:
        raise TextureFloorError("clean clip has too little texture to estimate blur")
    if radius is None:
        radius = min(MAX_FIT_RADIUS, (min(rows, cols) - 1) // 4)
    if radius < 1:
        raise ValidationError(f"frames of {rows}x{cols} are too small for blur estimation")

    scale = 2.0 ** float(epsilon_hat)
    free = tikhonov_kernel(lo, scale * hi, radius, reg)
    kernel_hat = BlurKernel(free, {"kind": "estimated", "reg": reg})
    initial = fit_kernel_moments(BlurKernel(_core_of(free)))

    conv = _ReplicateConvolver(hi, radius)
    y = lo.ravel()
    sigma_cap = radius / 3.0
    u_cap = _sigma_to_u(sigma_cap)

    def fit_linear(params):
        s1, s2, th = params
        w = mvg_weights(min(s1, sigma_cap), min(s2, sigma_cap), th)
        return _linear_fit(conv(w).ravel(), y)

    if not refine:
        gain, offset, resid = fit_linear(initial)
        return BlurEstimate(kernel_hat, *initial, gain, offset, initial, float(resid @ resid))

    def to_params(v):
        return _u_to_sigma(v[0]), _u_to_sigma(v[1]), v[2]

    def residual(v):
        return fit_linear(to_params(v))[2]

    def start(s1, s2, th):
        return np.array([min(_sigma_to_u(s1), u_cap), min(_sigma_to_u(s2), u_cap), th])

    s_mean = max(math.sqrt(0.5 * (initial[0] ** 2 + initial[1] ** 2)), 0.3)
    candidates = [start(max(initial[0], 0.3), max(initial[1], 0.3), initial[2])]
    for th in (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4):
        candidates.append(start(s_mean * 1.3, s_mean / 1.3, th))
    costs = [float(np.dot(r, r)) for r in map(residual, candidates)]
    order = np.argsort(costs)[:2]

    best = None
    for i in order:
        sol = optimize.least_squares(
            residual,
            candidates[i],
            bounds=([0.0, 0.0, -np.inf], [u_cap, u_cap, np.inf]),
            x_scale=[0.05, 0.05, 0.2],
            xtol=1e-10,
            ftol=1e-12,
            gtol=1e-12,
            max_nfev=200,
        )
        if best is None or sol.cost < best.cost:
            best = sol
    s1, s2, th = to_params(best.x)
    major, minor, angle = canonical_blur(s1, s2, th)
    # below ~0.2 px a Gaussian has no off-centre mass to speak of and the
    # cost surface is flat; report no blur when a delta fits as well
    r0 = residual(np.zeros(3))
    delta_cost = 0.5 * float(r0 @ r0)
    if major < SIGMA_MIN or delta_cost <= best.cost * (1 + DELTA_RTOL) + 1e-300:
        major = minor = angle = 0.0
    gain, offset, resid = fit_linear((major, minor, angle))
    return BlurEstimate(kernel_hat, major, minor, angle, gain, offset, initial, float(resid @ resid))


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------

@dataclass
class RegressionDiagnostics:
    slope: float
    intercept: float
    fit_residual: float
    bin_levels: list
    bin_variances: list
    bin_counts: list
    band_excess_columns: float = 0.0
    band_excess_rows: float = 0.0


@dataclass
class NoiseEstimate:
    gain_k: float
    noise_floor: float
    sigma_band: float
    theta_band: int
    diagnostics: RegressionDiagnostics

    def __iter__(self):
        return iter((self.gain_k, self.noise_floor, self.sigma_band, self.theta_band))


def _wls_line(x, v, n, iterations=4):
    """Weighted fit v = slope * x + intercept, projected to slope, intercept >= 0.

    Sample variances have variance 2 v^2 / (n - 1); weights follow the current
    prediction.
    """
    w = n.astype(np.float64)
    tiny = 1e-30
    slope = intercept = 0.0
    for _ in range(iterations):
        a = np.stack([x, np.ones_like(x)], axis=1) * np.sqrt(w)[:, None]
        slope, intercept = np.linalg.lstsq(a, v * np.sqrt(w), rcond=None)[0]
        if slope < 0:
            slope = 0.0
            intercept = float((w * v).sum() / w.sum())
        if intercept < 0:
            intercept = 0.0
            slope = max(float((w * x * v).sum() / (w * x * x).sum()), 0.0)
        pred = np.maximum(slope * x + intercept, tiny)
        w = (n - 1) / (2.0 * pred**2)
    return float(slope), float(intercept)


def band_excess(resid: np.ndarray) -> tuple[float, float]:
    """Excess variance of column means and of row means over the i.i.d. prediction.

    Returns (columns, rows).  Under i.i.d. noise the variance of a mean over n
    samples is the within-line variance over n; anything above that is banding.
    """
    _, _, rows, cols = resid.shape
    r = resid - resid.mean(axis=(-2, -1), keepdims=True)

    def excess(axis, n_along, n_lines):
        means = r.mean(axis=axis, keepdims=True)
        within = ((r - means) ** 2).sum() / (r.size - means.size)
        var_means = (means**2).sum() / (means.size * (n_lines - 1) / n_lines)
        return float(var_means - within / n_along)

    return excess(-2, rows, cols), excess(-1, cols, rows)


def estimate_noise(
    low: VideoTensor,
    high: VideoTensor,
    epsilon_hat: float,
    kernel_hat: BlurKernel | None,
    n_bins: int = NOISE_BINS,
    min_count: int = MIN_BIN_COUNT,
) -> NoiseEstimate:
    """Gain, signal-independent floor and banding from residual statistics.

    The expected clean signal is ``s = H * (2**epsilon_hat * high)``.  Pixels are
    binned by ``s`` (equal-count bins) and the variance of ``low - s`` in each
    bin is regressed on the bin's mean level.
    """
    lo, hi = _pair(low, high)
    scaled = high.with_data(hi * 2.0 ** float(epsilon_hat))
    s = (convolve(scaled, kernel_hat) if kernel_hat is not None else scaled).data
    resid = lo - s

    col_excess, row_excess = band_excess(resid)
    if col_excess >= row_excess:
        theta_band, excess = 0, col_excess
    else:
        theta_band, excess = 1, row_excess
    sigma_band = math.sqrt(excess) if excess > 0 else 0.0

    if np.max(np.abs(resid)) <= NOISELESS_ATOL:
        # the reference explains the clip exactly; no level range is needed
        diag = RegressionDiagnostics(0.0, 0.0, 0.0, [], [], [], col_excess, row_excess)
        return NoiseEstimate(0.0, 0.0, 0.0, 0, diag)

    flat_s = s.ravel()
    flat_r = resid.ravel()
    edges = np.unique(np.quantile(flat_s, np.linspace(0.0, 1.0, n_bins + 1)))
    which = np.clip(np.searchsorted(edges, flat_s, side="right") - 1, 0, len(edges) - 2)
    counts = np.bincount(which, minlength=len(edges) - 1)
    sums = np.bincount(which, weights=flat_r, minlength=len(edges) - 1)
    sq = np.bincount(which, weights=flat_r * flat_r, minlength=len(edges) - 1)
    level = np.bincount(which, weights=flat_s, minlength=len(edges) - 1)
    usable = counts >= min_count
    if usable.sum() < 3:
        raise InsufficientRangeError("fewer than 3 usable signal-level bins; clean clip lacks dynamic range")
    n = counts[usable].astype(np.float64)
    means = sums[usable] / n
    variances = (sq[usable] - n * means**2) / (n - 1)
    variances = np.maximum(variances, 0.0)
    levels = level[usable] / n

    slope, intercept = _wls_line(levels, variances, n)
    fit_resid = float(np.sqrt(np.mean((variances - (slope * levels + intercept)) ** 2)))
    diag = RegressionDiagnostics(
        slope=slope,
        intercept=intercept,
        fit_residual=fit_resid,
        bin_levels=levels.tolist(),
        bin_variances=variances.tolist(),
        bin_counts=[int(c) for c in n],
        band_excess_columns=col_excess,
        band_excess_rows=row_excess,
    )
    return NoiseEstimate(slope, intercept, sigma_band, theta_band, diag)


# ---------------------------------------------------------------------------
# angles
# ---------------------------------------------------------------------------

def angular_distance(theta: float, theta_prime: float) -> float:
    """1 - cos(|theta - theta'|): the cosine angle penalty, range [0, 2]."""
    return 1.0 - math.cos(abs(theta - theta_prime))


def bidirectional_angular_distance(theta: float, theta_prime: float) -> float:
    """Pi-periodic variant 1 - cos(2|theta - theta'|), range [0, 2].

    Orientations pi apart describe the same kernel and score 0; perpendicular
    orientations score 2.
    """
    return 1.0 - math.cos(2.0 * abs(theta - theta_prime))


def orientation_error(theta: float, theta_prime: float) -> float:
    """Smallest absolute angle between two orientations modulo pi."""
    d = (theta - theta_prime) % math.pi
    return min(d, math.pi - d)


# ---------------------------------------------------------------------------
# full profile
# ---------------------------------------------------------------------------

def profile_blur_fields(major: float, minor: float, angle: float) -> tuple[float, float, float, bool]:
    """Map a canonical ellipse onto profile fields obeying the orientation rule.

    Major axes in [0, pi/2] map exactly.  A major axis in (pi/2, pi) has no
    valid encoding and is moved to the nearer of pi/2 and pi (= 0); the last
    element reports whether that projection happened.
    """
    if major == minor:
        return major, minor, 0.0, False
    if angle <= HALF_PI:
        return major, minor, angle, False
    return major, minor, (HALF_PI if angle - HALF_PI < math.pi - angle else 0.0), True


@dataclass
class EstimationReport:
    profile_hat: DegradationProfile
    noise_floor_hat: float
    regression_diagnostics: RegressionDiagnostics
    kernel_hat: BlurKernel
    blur_canonical: tuple = ()
    blur_initial: tuple = ()
    epsilon_initial: float = 0.0
    mean_offset: float = 0.0
    orientation_projected: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "profile_hat": self.profile_hat.to_dict(),
            "noise_floor_hat": self.noise_floor_hat,
            "regression_diagnostics": asdict(self.regression_diagnostics),
            "kernel_hat": {"weights": self.kernel_hat.weights.tolist(), "params": self.kernel_hat.params},
            "blur_canonical": list(self.blur_canonical),
            "blur_initial": list(self.blur_initial),
            "epsilon_initial": self.epsilon_initial,
            "mean_offset": self.mean_offset,
            "orientation_projected": self.orientation_projected,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> EstimationReport:
        return cls(
            profile_hat=DegradationProfile(**d["profile_hat"]),
            noise_floor_hat=d["noise_floor_hat"],
            regression_diagnostics=RegressionDiagnostics(**d["regression_diagnostics"]),
            kernel_hat=BlurKernel(np.array(d["kernel_hat"]["weights"]), d["kernel_hat"]["params"]),
            blur_canonical=tuple(d["blur_canonical"]),
            blur_initial=tuple(d["blur_initial"]),
            epsilon_initial=d["epsilon_initial"],
            mean_offset=d["mean_offset"],
            orientation_projected=d["orientation_projected"],
            extra=d.get("extra", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> EstimationReport:
        return cls.from_dict(json.loads(text))

    def profile_line(self, source: str = "") -> str:
        return format_profile(self.profile_hat, source or None)

    def __eq__(self, other):
        if not isinstance(other, EstimationReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def estimate_profile(low: VideoTensor, high: VideoTensor, reg: float = TIKHONOV_REG, refine: bool = True) -> EstimationReport:
    """Exposure, then blur, then noise; assemble a validated profile estimate."""
    eps0 = estimate_exposure(low, high)
    blur = estimate_blur(low, high, eps0, reg=reg, refine=refine)
    offset = max(blur.offset, 0.0) if refine else 0.0
    try:
        eps = estimate_exposure(low, high, offset=offset)
    except NumericalError:
        eps, offset = eps0, 0.0

    kernel = None if max(blur.sigma_hx, blur.sigma_hy) < SIGMA_MIN else blur.model_kernel
    noise = estimate_noise(low, high, eps, kernel)

    sigma_read = math.sqrt(max(noise.noise_floor - noise.sigma_band**2, 0.0))
    sx, sy, th, projected = profile_blur_fields(blur.sigma_hx, blur.sigma_hy, blur.theta_h)
    profile = DegradationProfile(
        epsilon=eps,
        sigma_read=sigma_read,
        gain_k=noise.gain_k,
        lambda_q=0.0,
        sigma_band=noise.sigma_band,
        theta_band=noise.theta_band,
        sigma_hx=sx,
        sigma_hy=sy,
        theta_h=th,
    )
    ensure_valid(profile)
    return EstimationReport(
        profile_hat=profile,
        noise_floor_hat=noise.noise_floor,
        regression_diagnostics=noise.diagnostics,
        kernel_hat=blur.kernel_hat,
        blur_canonical=(blur.sigma_hx, blur.sigma_hy, blur.theta_h),
        blur_initial=tuple(blur.initial),
        epsilon_initial=eps0,
        mean_offset=offset,
        orientation_projected=projected,
    )


__all__ = [
    "BlurEstimate",
    "EstimationReport",
    "NoiseEstimate",
    "RegressionDiagnostics",
    "angular_distance",
    "bidirectional_angular_distance",
    "estimate_blur",
    "estimate_exposure",
    "estimate_noise",
    "estimate_profile",
    "orientation_error",
]
