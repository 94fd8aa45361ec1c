"""End-to-end low-light synthesis.

    low = encode(clip(noise(H * (2**epsilon * linearize(high)))))

One profile, hence one kernel, per clip.  Exposure is applied before the blur
and the noise after it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .blur import SIGMA_MIN, BlurKernel, build_mvg_kernel, convolve
from .colorspace import encode, linearize
from .errors import ValidationError
from .noise import total_noise
from .profile import DegradationProfile, ProfileSet, draw_indices, ensure_valid
from .rng import SeedSpec, StreamTag, as_seed
from .video import Colorspace, VideoTensor


def adjust_exposure(v: VideoTensor, epsilon: float) -> VideoTensor:
    """Scale linear intensities by 2**epsilon (one stop per unit); no clipping."""
    v.require(Colorspace.LINEAR_RGB, "adjust_exposure")
    epsilon = float(epsilon)
    if not math.isfinite(epsilon):
        raise ValidationError(f"epsilon must be finite, got {epsilon!r}")
    if epsilon == 0:
        return v
    return v.with_data(v.data * 2.0**epsilon)


def profile_kernel(p: DegradationProfile) -> BlurKernel | None:
    """The clip's blur kernel, or None when the profile has no blur."""
    if max(p.sigma_hx, p.sigma_hy) < SIGMA_MIN:
        return None
    return build_mvg_kernel(p.sigma_hx, p.sigma_hy, p.theta_h)


@dataclass(frozen=True)
class SynthesisRequest:
    input: VideoTensor
    profile: DegradationProfile
    seed: SeedSpec = SeedSpec(0)
    output_space: Colorspace = Colorspace.ENCODED_SRGB
    emit_intermediates: bool = False

    def __post_init__(self):
        ensure_valid(self.profile)
        object.__setattr__(self, "seed", as_seed(self.seed))
        if not isinstance(self.output_space, Colorspace):
            raise ValidationError(f"unknown output colorspace {self.output_space!r}")


@dataclass
class SynthesisResult:
    output: VideoTensor
    kernel: BlurKernel | None
    intermediates: dict[str, VideoTensor] = field(default_factory=dict)


def synthesize(req: SynthesisRequest, workers: int = 1) -> SynthesisResult:
    p = req.profile
    x = req.input
    if x.colorspace is Colorspace.ENCODED_SRGB:
        x = linearize(x)
    stages = {}

    x = adjust_exposure(x, p.epsilon)
    stages["exposure"] = x
    kernel = profile_kernel(p)
    if kernel is not None:
        x = convolve(x, kernel, workers=workers)
    stages["blur"] = x
    x = total_noise(x, p, req.seed, workers=workers)
    stages["noisy"] = x

    if req.output_space is Colorspace.ENCODED_SRGB:
        # the single clip to [0, 1] (sensor saturation) happens inside encode
        x = encode(x)
    return SynthesisResult(x, kernel, stages if req.emit_intermediates else {})


def degrade(req: SynthesisRequest, workers: int = 1) -> VideoTensor:
    return synthesize(req, workers=workers).output


@dataclass
class BatchItem:
    output: VideoTensor
    profile: DegradationProfile
    index: int
    source: str = ""


def clip_seed(seed: SeedSpec | int, clip_index: int) -> SeedSpec:
    """Noise seed used for clip ``clip_index`` of a batch."""
    return as_seed(seed).child(StreamTag.CLIP, clip_index)


def batch_degrade(
    inputs: Sequence[VideoTensor],
    profile_set: ProfileSet,
    seed: SeedSpec | int,
    output_space: Colorspace = Colorspace.ENCODED_SRGB,
    workers: int = 1,
) -> list[BatchItem]:
    """Degrade each clip with one profile drawn uniformly from the set.

    The assignment sequence comes from one draw stream of ``seed``; clip i is
    synthesized with ``clip_seed(seed, i)``.
    """
    seed = as_seed(seed)
    idx = draw_indices(profile_set, seed, len(inputs))
    items = []
    for i, (clip, j) in enumerate(zip(inputs, idx)):
        j = int(j)
        req = SynthesisRequest(clip, profile_set[j], clip_seed(seed, i), output_space)
        items.append(BatchItem(degrade(req, workers=workers), profile_set[j], j, profile_set.labels[j]))
    return items


__all__ = [
    "SynthesisRequest",
    "SynthesisResult",
    "BatchItem",
    "adjust_exposure",
    "profile_kernel",
    "synthesize",
    "degrade",
    "batch_degrade",
    "clip_seed",
]
