"""Physics-based low-light video synthesis, degradation estimation and metrics.

Pipeline for one clip and one degradation profile::

    linearize -> exposure (2**epsilon) -> blur (rotated Gaussian) -> noise -> encode

See ``lowlightsim.synthesis`` for the entry points and ``lowlightsim.cli`` for
the command line.
"""

__version__ = "0.1.0"

from .blur import BlurKernel, build_mvg_kernel, build_reference_kernel, convolve, fit_kernel_moments
from .colorspace import encode, linearize
from .errors import (
    ClipIOError,
    DimensionMismatchError,
    LowLightError,
    NumericalError,
    TextureFloorError,
    ValidationError,
)
from .estimator import EstimationReport, angular_distance, estimate_profile
from .metrics import kld, max_intensity_diff, psnr, ssim
from .noise import total_noise
from .profile import (
    DegradationProfile,
    ProfileBounds,
    ProfileSet,
    sample_profiles,
    sample_uniform_profile,
    validate_profile,
)
from .rng import SeedSpec
from .synthesis import SynthesisRequest, batch_degrade, degrade, synthesize
from .video import Colorspace, VideoTensor

__all__ = [
    "BlurKernel",
    "ClipIOError",
    "Colorspace",
    "DegradationProfile",
    "DimensionMismatchError",
    "EstimationReport",
    "LowLightError",
    "NumericalError",
    "ProfileBounds",
    "ProfileSet",
    "SeedSpec",
    "SynthesisRequest",
    "TextureFloorError",
    "ValidationError",
    "VideoTensor",
    "angular_distance",
    "batch_degrade",
    "build_mvg_kernel",
    "build_reference_kernel",
    "convolve",
    "degrade",
    "encode",
    "estimate_profile",
    "fit_kernel_moments",
    "kld",
    "linearize",
    "max_intensity_diff",
    "psnr",
    "sample_profiles",
    "sample_uniform_profile",
    "ssim",
    "synthesize",
    "total_noise",
    "validate_profile",
]
