"""Synthetic test clips."""

from __future__ import annotations

import numpy as np

from .rng import SeedSpec, as_seed
from .video import Colorspace, VideoTensor


def block_texture(
    frames: int = 5,
    height: int = 128,
    width: int = 128,
    channels: int = 3,
    block: int = 3,
    seed: SeedSpec | int = 0,
) -> VideoTensor:
    """Random black/white blocks drifting one pixel per frame along the diagonal.

    Independent per channel.  Full-range binary content gives every intensity
    bin of a noise regression its widest spread, and ``block``-sized edges in
    every direction make a blur's orientation observable.  Returned encoded.
    """
    rng = as_seed(seed).generator()
    rows, cols = height + frames, width + frames
    cells = rng.random((channels, -(-rows // block), -(-cols // block))) < 0.5
    base = np.repeat(np.repeat(cells, block, axis=1), block, axis=2)[:, :rows, :cols].astype(np.float64)
    data = np.stack([base[:, t : t + height, t : t + width] for t in range(frames)])
    return VideoTensor(data, Colorspace.ENCODED_SRGB)
