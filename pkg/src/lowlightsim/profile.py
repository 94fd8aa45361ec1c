"""Degradation profiles, sampling bounds and profile sets.

A profile is the nine-number vector that fully determines one synthesis pass::

    epsilon      exposure change in stops (<= 0 darkens)
    sigma_read   read-noise std (linear intensity)
    gain_k       system gain for shot noise (linear intensity per photon count)
    lambda_q     upper bound of the uniform quantization offset
    sigma_band   banding-noise std
    theta_band   0 = one offset per column, 1 = one offset per row
    sigma_hx     blur spread along the kernel x-axis (pixels)
    sigma_hy     blur spread along the kernel y-axis (pixels)
    theta_h      blur orientation in [0, pi)

Profiles, profile sets and bounds are persisted as tab-separated text with a
one-line header; floats are written with ``repr`` so a write/read round trip is
exact.
"""

from __future__ import annotations

import math
import os
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import ClipIOError, EmptyProfileSetError, ValidationError
from .rng import SeedSpec, StreamTag, as_seed

FIELD_NAMES = (
    "epsilon",
    "sigma_read",
    "gain_k",
    "lambda_q",
    "sigma_band",
    "theta_band",
    "sigma_hx",
    "sigma_hy",
    "theta_h",
)
NONNEGATIVE_FIELDS = ("sigma_read", "gain_k", "lambda_q", "sigma_band", "sigma_hx", "sigma_hy")
CONTINUOUS_FIELDS = tuple(f for f in FIELD_NAMES if f != "theta_band")
SOURCE_COLUMN = "source"

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class DegradationProfile:
    epsilon: float = 0.0
    sigma_read: float = 0.0
    gain_k: float = 0.0
    lambda_q: float = 0.0
    sigma_band: float = 0.0
    theta_band: int = 0
    sigma_hx: float = 0.0
    sigma_hy: float = 0.0
    theta_h: float = 0.0

    @classmethod
    def from_sequence(cls, values: Sequence) -> DegradationProfile:
        if len(values) != len(FIELD_NAMES):
            raise ValidationError(f"a profile has {len(FIELD_NAMES)} fields, got {len(values)}")
        kw = {}
        for name, value in zip(FIELD_NAMES, values):
            if name == "theta_band":
                f = float(value)
                if not f.is_integer():
                    raise ValidationError(f"theta_band must be 0 or 1, got {value!r}")
                kw[name] = int(f)
            else:
                kw[name] = float(value)
        return cls(**kw)

    def as_tuple(self) -> tuple:
        return astuple(self)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def has_blur(self) -> bool:
        return self.sigma_hx > 0 or self.sigma_hy > 0


NEUTRAL_PROFILE = DegradationProfile()


def validate_profile(p: DegradationProfile) -> list[str]:
    """Return the list of violated constraints; empty means the profile is valid."""
    violations = []
    for name in FIELD_NAMES:
        value = getattr(p, name)
        try:
            ok = math.isfinite(value)
        except TypeError:
            ok = False
        if not ok:
            violations.append(f"{name}: must be a finite number, got {value!r}")
    if violations:
        return violations

    for name in NONNEGATIVE_FIELDS:
        if getattr(p, name) < 0:
            violations.append(f"{name}: must be >= 0, got {getattr(p, name)!r}")
    if p.theta_band not in (0, 1):
        violations.append(f"theta_band: must be 0 or 1, got {p.theta_band!r}")
    if not 0 <= p.theta_h < math.pi:
        violations.append(f"theta_h: must lie in [0, pi), got {p.theta_h!r}")
    elif p.sigma_hx > p.sigma_hy and p.theta_h > HALF_PI:
        violations.append(f"theta_h: must lie in [0, pi/2] when sigma_hx > sigma_hy, got {p.theta_h!r}")
    elif p.sigma_hx < p.sigma_hy and p.theta_h < HALF_PI:
        violations.append(f"theta_h: must lie in [pi/2, pi) when sigma_hx < sigma_hy, got {p.theta_h!r}")
    return violations


def ensure_valid(p: DegradationProfile) -> DegradationProfile:
    problems = validate_profile(p)
    if problems:
        raise ValidationError("invalid profile: " + "; ".join(problems))
    return p


def order_blur_axes(sigma_hx: float, sigma_hy: float, theta_h: float) -> tuple[float, float, float]:
    """Swap the two spreads if the orientation convention is violated.

    The angle is kept as drawn; only the axis lengths move.
    """
    if (sigma_hx > sigma_hy and theta_h > HALF_PI) or (sigma_hx < sigma_hy and theta_h < HALF_PI):
        sigma_hx, sigma_hy = sigma_hy, sigma_hx
    return sigma_hx, sigma_hy, theta_h


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def format_profile(p: DegradationProfile, source: str | None = None) -> str:
    cols = [_fmt(v) for v in p.as_tuple()]
    if source:
        if "\t" in source or "\n" in source:
            raise ValidationError("source labels may not contain tabs or newlines")
        cols.append(source)
    return "\t".join(cols)


def parse_profile(line: str) -> tuple[DegradationProfile, str]:
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) not in (len(FIELD_NAMES), len(FIELD_NAMES) + 1):
        raise ValidationError(f"expected {len(FIELD_NAMES)} or {len(FIELD_NAMES) + 1} columns, got {len(cols)}")
    try:
        p = DegradationProfile.from_sequence(cols[: len(FIELD_NAMES)])
    except ValueError as exc:
        raise ValidationError(f"malformed profile record: {exc}") from None
    label = cols[len(FIELD_NAMES)] if len(cols) > len(FIELD_NAMES) else ""
    return p, label


PROFILE_HEADER = "\t".join(FIELD_NAMES + (SOURCE_COLUMN,))


@dataclass(frozen=True)
class ProfileSet:
    """Ordered pool of profiles, each with a free-text provenance label."""

    profiles: tuple[DegradationProfile, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        profiles = tuple(self.profiles)
        labels = tuple(self.labels) if self.labels else ("",) * len(profiles)
        if len(labels) != len(profiles):
            raise ValidationError("one source label per profile is required")
        object.__setattr__(self, "profiles", profiles)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.profiles)

    def __getitem__(self, i) -> DegradationProfile:
        return self.profiles[i]

    def __iter__(self):
        return iter(self.profiles)

    def to_text(self) -> str:
        lines = [PROFILE_HEADER]
        lines += [format_profile(p, lab) for p, lab in zip(self.profiles, self.labels)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ProfileSet:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValidationError("profile file is empty (missing header)")
        header = lines[0].split("\t")
        if tuple(header[: len(FIELD_NAMES)]) != FIELD_NAMES or header[len(FIELD_NAMES):] not in ([], [SOURCE_COLUMN]):
            raise ValidationError(f"bad profile header: {lines[0]!r}")
        profiles, labels = [], []
        for n, line in enumerate(lines[1:], start=2):
            try:
                p, lab = parse_profile(line)
            except ValidationError as exc:
                raise ValidationError(f"line {n}: {exc}") from None
            problems = validate_profile(p)
            if problems:
                raise ValidationError(f"line {n}: " + "; ".join(problems))
            profiles.append(p)
            labels.append(lab)
        return cls(tuple(profiles), tuple(labels))

    def save(self, path) -> None:
        from .io import atomic_write_text

        atomic_write_text(path, self.to_text())

    @classmethod
    def load(cls, path) -> ProfileSet:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ClipIOError(f"cannot read profile file {os.fspath(path)!r}: {exc.strerror}") from None
        return cls.from_text(text)


# ---------------------------------------------------------------------------
# bounds and sampling
# ---------------------------------------------------------------------------

DEFAULT_BOUNDS = {
    "epsilon": (-6.0, -1.0),
    "sigma_read": (0.0, 0.05),
    "gain_k": (0.0, 0.02),
    "lambda_q": (0.0, 1.0 / 255.0),
    "sigma_band": (0.0, 0.02),
    "theta_band": (0, 1),
    "sigma_hx": (0.1, 4.0),
    "sigma_hy": (0.1, 4.0),
    "theta_h": (0.0, math.pi),
}


@dataclass(frozen=True)
class ProfileBounds:
    """Closed [lo, hi] interval per field (theta_h is treated as [lo, hi))."""

    intervals: dict

    def __post_init__(self):
        merged = dict(DEFAULT_BOUNDS)
        for name, pair in dict(self.intervals).items():
            if name not in FIELD_NAMES:
                raise ValidationError(f"unknown bounds field {name!r}")
            merged[name] = pair
        checked = {}
        for name in FIELD_NAMES:
            lo, hi = (float(v) for v in merged[name])
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"{name}: bounds must be finite, got [{lo}, {hi}]")
            if lo > hi:
                raise ValidationError(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            if name in NONNEGATIVE_FIELDS and lo < 0:
                raise ValidationError(f"{name}: bounds must be non-negative")
            if name == "theta_band":
                if not ({lo, hi} <= {0.0, 1.0}):
                    raise ValidationError("theta_band bounds must be 0 or 1")
                lo, hi = int(lo), int(hi)
            if name == "theta_h" and (lo < 0 or hi > math.pi):
                raise ValidationError("theta_h bounds must lie within [0, pi]")
            checked[name] = (lo, hi)
        object.__setattr__(self, "intervals", checked)

    @classmethod
    def default(cls) -> ProfileBounds:
        return cls({})

    @classmethod
    def point(cls, p: DegradationProfile) -> ProfileBounds:
        return cls({name: (getattr(p, name), getattr(p, name)) for name in FIELD_NAMES})

    def __getitem__(self, name):
        return self.intervals[name]

    def to_text(self) -> str:
        lines = ["field\tlo\thi"]
        for name in FIELD_NAMES:
            lo, hi = self.intervals[name]
            lines.append(f"{name}\t{_fmt(lo)}\t{_fmt(hi)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ProfileBounds:
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        if not lines or lines[0].split() != ["field", "lo", "hi"]:
            raise ValidationError("bounds file must start with the header 'field\\tlo\\thi'")
        intervals = {}
        for line in lines[1:]:
            cols = line.split()
            if len(cols) != 3:
                raise ValidationError(f"bad bounds line {line!r}")
            try:
                intervals[cols[0]] = (float(cols[1]), float(cols[2]))
            except ValueError:
                raise ValidationError(f"bad number in bounds line {line!r}") from None
        return cls(intervals)

    @classmethod
    def load(cls, path) -> ProfileBounds:
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise ClipIOError(f"cannot read bounds file {os.fspath(path)!r}: {exc.strerror}") from None


def sample_uniform_profile(bounds: ProfileBounds, seed: SeedSpec | int) -> DegradationProfile:
    """Draw every field independently and uniformly from its interval.

    theta_band is drawn from the integer interval (equiprobable 0/1 under the
    defaults).  After drawing, the blur spreads are swapped if needed so the
    orientation convention holds; the result always passes validation.
    """
    rng = as_seed(seed).generator(StreamTag.PROFILE)
    values = {}
    for name in FIELD_NAMES:
        lo, hi = bounds[name]
        if name == "theta_band":
            values[name] = int(rng.integers(lo, hi + 1))
        else:
            values[name] = float(rng.uniform(lo, hi))
    if values["theta_h"] >= math.pi:
        values["theta_h"] -= math.pi
    values["sigma_hx"], values["sigma_hy"], values["theta_h"] = order_blur_axes(
        values["sigma_hx"], values["sigma_hy"], values["theta_h"]
    )
    return ensure_valid(DegradationProfile(**values))


def sample_profiles(bounds: ProfileBounds, seed: SeedSpec | int, n: int) -> list[DegradationProfile]:
    seed = as_seed(seed)
    return [sample_uniform_profile(bounds, seed.child(i)) for i in range(n)]


def draw_indices(profile_set: ProfileSet, seed: SeedSpec | int, n: int) -> np.ndarray:
    """n uniform indices into the set from a single reproducible stream."""
    if len(profile_set) == 0:
        raise EmptyProfileSetError("cannot draw from an empty profile set")
    rng = as_seed(seed).generator(StreamTag.DRAW)
    return rng.integers(0, len(profile_set), size=n)


def draw_from_set(profile_set: ProfileSet, seed: SeedSpec | int) -> DegradationProfile:
    return profile_set[int(draw_indices(profile_set, seed, 1)[0])]


def profile_set_from(profiles: Iterable[DegradationProfile], label: str = "") -> ProfileSet:
    profiles = tuple(profiles)
    return ProfileSet(profiles, (label,) * len(profiles))
