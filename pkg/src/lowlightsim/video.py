"""Frame-stack container shared by every stage of the pipeline."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ColorspaceError, DimensionMismatchError, ValidationError


class Colorspace(enum.Enum):
    ENCODED_SRGB = "srgb"
    LINEAR_RGB = "linear"


@dataclass(frozen=True, eq=False)
class VideoTensor:
    """T x C x H x W float64 frames tagged with their colorspace.

    The array is copied on construction and made read-only, so a tensor can be
    shared freely between threads.  Values are nominally in [0, 1] but noise
    stages may push them outside; only finiteness is enforced.
    """

    data: np.ndarray
    colorspace: Colorspace

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim == 3:
            arr = arr[:, None]
        if arr.ndim != 4:
            raise ValidationError(f"video must be 4-D (T, C, H, W), got shape {arr.shape}")
        if min(arr.shape) <= 0:
            raise ValidationError(f"video dimensions must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("video contains non-finite values")
        if not isinstance(self.colorspace, Colorspace):
            raise ValidationError(f"unknown colorspace {self.colorspace!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def with_data(self, data: np.ndarray, colorspace: Colorspace | None = None) -> VideoTensor:
        return VideoTensor(data, self.colorspace if colorspace is None else colorspace)

    def require(self, colorspace: Colorspace, what: str = "operation") -> None:
        if self.colorspace is not colorspace:
            raise ColorspaceError(f"{what} requires {colorspace.value} input, got {self.colorspace.value}")

    def __eq__(self, other):
        if not isinstance(other, VideoTensor):
            return NotImplemented
        return self.colorspace is other.colorspace and np.array_equal(self.data, other.data)

    __hash__ = None


def linear_video(data) -> VideoTensor:
    return VideoTensor(data, Colorspace.LINEAR_RGB)


def srgb_video(data) -> VideoTensor:
    return VideoTensor(data, Colorspace.ENCODED_SRGB)


def check_same_shape(a: VideoTensor, b: VideoTensor) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
