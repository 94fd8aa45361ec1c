"""Seeded random sub-streams.

Every random draw in the package comes from a generator derived from a
``SeedSpec``.  A sub-stream is identified by a tuple of small integers (for
noise: the frame index and the noise-source tag) which is fed to NumPy's
``SeedSequence`` as its spawn key.  ``SeedSequence`` hashes the master seed and
the spawn key with a fixed, documented mixing function, so the stream for a
given ``(master_seed, key)`` does not depend on how many other streams were
created before it or in which order.  That is what makes per-frame parallel
synthesis reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_UINT64_MAX = 2**64 - 1


class StreamTag(enum.IntEnum):
    """First element of every spawn key; keeps unrelated consumers apart."""

    NOISE = 0
    PROFILE = 1
    DRAW = 2
    CLIP = 3


class NoiseSource(enum.IntEnum):
    READ = 0
    SHOT = 1
    QUANTIZATION = 2
    BANDING = 3


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self):
        if not isinstance(self.master_seed, (int, np.integer)) or isinstance(self.master_seed, bool):
            raise ValidationError(f"master_seed must be an integer, got {self.master_seed!r}")
        if not 0 <= int(self.master_seed) <= _UINT64_MAX:
            raise ValidationError("master_seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_id", tuple(int(k) for k in self.stream_id))
        if any(k < 0 for k in self.stream_id):
            raise ValidationError("stream keys must be non-negative")

    def child(self, *keys: int) -> SeedSpec:
        return SeedSpec(self.master_seed, self.stream_id + tuple(int(k) for k in keys))

    def seed_sequence(self, *keys: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id + tuple(int(k) for k in keys))

    def generator(self, *keys: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*keys)))

    def noise_generator(self, frame: int, source: NoiseSource) -> np.random.Generator:
        """Generator for one (frame, noise-source) pair."""
        return self.generator(StreamTag.NOISE, frame, int(source))


def as_seed(seed: SeedSpec | int) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(seed)
