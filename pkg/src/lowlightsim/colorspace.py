"""sRGB transfer characteristic.

All physical degradations act on linear intensity.  Only the sRGB transfer
curve is applied (no RGB -> XYZ matrix): exposure scaling, blur and additive
noise are all per-channel operations that commute with any fixed linear
channel mix, so the matrix would cancel out on the way back.
"""

import numpy as np

from .video import Colorspace, VideoTensor

# IEC 61966-2-1 breakpoint on the encoded side.
ENCODED_BREAK = 0.04045
LINEAR_BREAK = ENCODED_BREAK / 12.92
GAMMA = 2.4


def srgb_to_linear(v):
    """Inverse transfer curve on an array clamped to [0, 1]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    power = ((v + 0.055) / 1.055) ** GAMMA
    return np.where(v <= ENCODED_BREAK, v / 12.92, power)


def linear_to_srgb(x):
    """Forward transfer curve on an array clipped to [0, 1].

    The standard pair of breakpoints is inconsistent by ~3e-8; using the
    linear-side image of the encoded breakpoint and flooring the power branch
    at it keeps the curve monotone and an exact inverse of ``srgb_to_linear``.
    """
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    # 1.055 * y - 0.055 rounds to 1 - 2**-53 at y = 1; this form is exact there
    power = 1.055 * (np.power(x, 1.0 / GAMMA) - 1.0) + 1.0
    return np.where(x <= LINEAR_BREAK, x * 12.92, np.maximum(power, ENCODED_BREAK))


def linearize(v: VideoTensor) -> VideoTensor:
    v.require(Colorspace.ENCODED_SRGB, "linearize")
    return VideoTensor(srgb_to_linear(v.data), Colorspace.LINEAR_RGB)


def encode(v: VideoTensor) -> VideoTensor:
    v.require(Colorspace.LINEAR_RGB, "encode")
    return VideoTensor(linear_to_srgb(v.data), Colorspace.ENCODED_SRGB)
