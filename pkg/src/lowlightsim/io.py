"""Clip and text I/O.

Two clip formats are supported:

* a directory of numbered frame images (``000000.png``, ``000001.png``, ...;
  8- or 16-bit, 1 or 3 channels).  Numbering must be dense and start at 0.
* a raw planar container: a 32-byte little-endian header followed by the
  T x C x H x W samples::

      offset  size  field
      0       4     magic b"LVRW"
      4       2     version (1)
      6       1     dtype tag (1 = float32, 2 = float64)
      7       1     colorspace (0 = encoded sRGB, 1 = linear)
      8       16    T, C, H, W as uint32
      24      8     reserved, zero

Every writer stages its output next to the destination and renames it into
place, so a failed write never leaves a partial file or directory behind.
"""

from __future__ import annotations

import os
import re
import shutil
import struct
import tempfile
from pathlib import Path

import cv2
import numpy as np

from .errors import ClipIOError, ValidationError
from .video import Colorspace, VideoTensor

RAW_MAGIC = b"LVRW"
RAW_VERSION = 1
RAW_SUFFIX = ".lvrw"
_HEADER = struct.Struct("<4sHBB4I8x")
_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_COLORSPACE_FLAGS = {0: Colorspace.ENCODED_SRGB, 1: Colorspace.LINEAR_RGB}

FRAME_PATTERN = "{:06d}.png"
_FRAME_NAME = re.compile(r"^(\d+)\.(png|tif|tiff)$", re.IGNORECASE)
BIT_DEPTHS = {8: np.uint8, 16: np.uint16}


# ---------------------------------------------------------------------------
# atomic output
# ---------------------------------------------------------------------------

def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    except OSError as exc:
        raise ClipIOError(f"cannot write {os.fspath(path)!r}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        _silent_remove(tmp)
        raise ClipIOError(f"cannot write {os.fspath(path)!r}: {exc.strerror}") from None


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _silent_remove(path) -> None:
    try:
        if os.path.isdir(path):
            shutil.rmtree(path)
        else:
            os.remove(path)
    except OSError:
        pass


class StagedDirectory:
    """Context manager that builds a directory under a temporary name.

    On a clean exit the staging directory is renamed to ``target``; on an
    exception it is deleted.  An existing ``target`` is only replaced when
    ``overwrite`` is set, and even then not until the new content is complete.
    """

    def __init__(self, target, overwrite: bool = False):
        self.target = Path(target)
        self.overwrite = overwrite
        self.path: Path | None = None

    def __enter__(self) -> Path:
        if self.target.exists() and not self.overwrite:
            raise ClipIOError(f"output {os.fspath(self.target)!r} already exists (use --overwrite)")
        parent = self.target.parent
        try:
            parent.mkdir(parents=True, exist_ok=True)
            self.path = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", suffix=".tmp", dir=parent))
        except OSError as exc:
            raise ClipIOError(f"cannot create output under {os.fspath(parent)!r}: {exc.strerror}") from None
        return self.path

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            _silent_remove(self.path)
            return False
        old = None
        try:
            if self.target.exists():
                old = self.target.with_name(f".{self.target.name}.old-{os.getpid()}")
                os.replace(self.target, old)
            os.replace(self.path, self.target)
        except OSError as exc:
            _silent_remove(self.path)
            if old is not None and not self.target.exists():
                os.replace(old, self.target)
            raise ClipIOError(f"cannot move output into {os.fspath(self.target)!r}: {exc.strerror}") from None
        if old is not None:
            _silent_remove(old)
        return False


# ---------------------------------------------------------------------------
# frame directories
# ---------------------------------------------------------------------------

def list_frames(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ClipIOError(f"frame directory {os.fspath(directory)!r} does not exist")
    numbered = {}
    for entry in directory.iterdir():
        m = _FRAME_NAME.match(entry.name)
        if m:
            idx = int(m.group(1))
            if idx in numbered:
                raise ClipIOError(f"frame {idx} appears twice in {os.fspath(directory)!r}")
            numbered[idx] = entry
    if not numbered:
        raise ClipIOError(f"no numbered frames in {os.fspath(directory)!r}")
    if sorted(numbered) != list(range(len(numbered))):
        raise ClipIOError(f"frame numbering in {os.fspath(directory)!r} is not dense from 0")
    return [numbered[i] for i in range(len(numbered))]


def _read_image(path: Path) -> np.ndarray:
    img = cv2.imread(os.fspath(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise ClipIOError(f"cannot decode image {os.fspath(path)!r}")
    if img.dtype == np.uint8:
        scale = 255.0
    elif img.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ClipIOError(f"{os.fspath(path)!r}: unsupported sample type {img.dtype}")
    if img.ndim == 2:
        chw = img[None]
    elif img.ndim == 3 and img.shape[2] == 3:
        chw = img[:, :, ::-1].transpose(2, 0, 1)  # BGR -> RGB
    else:
        raise ClipIOError(f"{os.fspath(path)!r}: expected 1 or 3 channels, got shape {img.shape}")
    return chw.astype(np.float64) / scale


def read_frames(directory, colorspace: Colorspace = Colorspace.ENCODED_SRGB) -> VideoTensor:
    frames = [_read_image(p) for p in list_frames(directory)]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ClipIOError(f"frames in {os.fspath(directory)!r} differ in size: {sorted(shapes)}")
    return VideoTensor(np.stack(frames), colorspace)


def quantize(data: np.ndarray, bit_depth: int) -> np.ndarray:
    if bit_depth not in BIT_DEPTHS:
        raise ValidationError(f"bit depth must be 8 or 16, got {bit_depth}")
    peak = 2**bit_depth - 1
    return np.rint(np.clip(data, 0.0, 1.0) * peak).astype(BIT_DEPTHS[bit_depth])


def _write_frames_into(directory: Path, v: VideoTensor, bit_depth: int) -> None:
    samples = quantize(v.data, bit_depth)
    c = v.shape[1]
    if c not in (1, 3):
        raise ValidationError(f"frame images need 1 or 3 channels, got {c}")
    for t, frame in enumerate(samples):
        img = frame[0] if c == 1 else np.ascontiguousarray(frame[::-1].transpose(1, 2, 0))
        path = directory / FRAME_PATTERN.format(t)
        if not cv2.imwrite(os.fspath(path), img):
            raise ClipIOError(f"cannot encode frame {os.fspath(path)!r}")


def write_frames(directory, v: VideoTensor, bit_depth: int = 16, overwrite: bool = False) -> None:
    """Write ``v`` as numbered PNGs; values are clipped to [0, 1] and rounded."""
    with StagedDirectory(directory, overwrite) as tmp:
        _write_frames_into(tmp, v, bit_depth)


# ---------------------------------------------------------------------------
# raw container
# ---------------------------------------------------------------------------

def raw_bytes(v: VideoTensor, dtype: str = "float64") -> bytes:
    tag = {"float32": 1, "float64": 2}.get(dtype)
    if tag is None:
        raise ValidationError(f"raw dtype must be float32 or float64, got {dtype!r}")
    flag = 1 if v.colorspace is Colorspace.LINEAR_RGB else 0
    header = _HEADER.pack(RAW_MAGIC, RAW_VERSION, tag, flag, *v.shape)
    return header + v.data.astype(_DTYPE_TAGS[tag]).tobytes()


def parse_raw(payload: bytes, name: str = "<raw>") -> VideoTensor:
    if len(payload) < _HEADER.size:
        raise ClipIOError(f"{name}: truncated header")
    magic, version, tag, flag, t, c, h, w = _HEADER.unpack_from(payload)
    if magic != RAW_MAGIC:
        raise ClipIOError(f"{name}: bad magic {magic!r}")
    if version != RAW_VERSION:
        raise ClipIOError(f"{name}: unsupported version {version}")
    if tag not in _DTYPE_TAGS or flag not in _COLORSPACE_FLAGS:
        raise ClipIOError(f"{name}: unknown dtype tag {tag} or colorspace flag {flag}")
    dtype = _DTYPE_TAGS[tag]
    expected = t * c * h * w * dtype.itemsize
    if len(payload) - _HEADER.size != expected:
        raise ClipIOError(f"{name}: header says {expected} payload bytes, found {len(payload) - _HEADER.size}")
    data = np.frombuffer(payload, dtype=dtype, offset=_HEADER.size).reshape(t, c, h, w)
    try:
        return VideoTensor(data, _COLORSPACE_FLAGS[flag])
    except ValidationError as exc:
        raise ClipIOError(f"{name}: {exc}") from None


def read_raw(path) -> VideoTensor:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise ClipIOError(f"cannot read {os.fspath(path)!r}: {exc.strerror}") from None
    return parse_raw(payload, os.fspath(path))


def write_raw(path, v: VideoTensor, dtype: str = "float64") -> None:
    atomic_write_bytes(path, raw_bytes(v, dtype))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def is_raw_path(path) -> bool:
    return Path(path).suffix.lower() == RAW_SUFFIX


def read_clip(path, colorspace: Colorspace = Colorspace.ENCODED_SRGB) -> VideoTensor:
    """A raw container (colorspace from its header) or a frame directory (``colorspace``)."""
    path = Path(path)
    if path.is_dir():
        return read_frames(path, colorspace)
    if path.is_file():
        return read_raw(path)
    raise ClipIOError(f"input {os.fspath(path)!r} does not exist")


def write_clip_into(directory: Path, name: str, v: VideoTensor, bit_depth: int = 16) -> Path:
    """Write ``v`` inside an already staged directory as ``name.lvrw`` or ``name/``."""
    target = directory / name
    if name.endswith(RAW_SUFFIX):
        target.write_bytes(raw_bytes(v))
    else:
        target.mkdir()
        _write_frames_into(target, v, bit_depth)
    return target
