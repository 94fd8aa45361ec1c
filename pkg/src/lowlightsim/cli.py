"""``lowlightsim`` command line.

Commands: synth, estimate, sample-profiles, kernel-dump, evaluate.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 validation, 5 numerical.  Failures print
exactly one line to stderr: ``error: <category>: <message>``.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from pathlib import Path

import cv2
import numpy as np

from . import __version__
from .blur import build_mvg_kernel, build_reference_kernel
from .colorspace import encode, linearize
from .errors import ClipIOError, LowLightError, ValidationError
from .estimator import estimate_profile
from .io import (
    RAW_SUFFIX,
    StagedDirectory,
    atomic_write_bytes,
    atomic_write_text,
    read_clip,
    write_clip_into,
)
from .metrics import HISTOGRAM_MODES, METRICS, evaluate_pair
from .noise import noise_components
from .profile import (
    FIELD_NAMES,
    DegradationProfile,
    ProfileBounds,
    ProfileSet,
    draw_indices,
    ensure_valid,
    profile_set_from,
    sample_profiles,
)
from .rng import SeedSpec
from .synthesis import SynthesisRequest, clip_seed, synthesize
from .video import Colorspace, VideoTensor

EXIT_OK = 0
EXIT_USAGE = 2
PREVIEW_GAIN = 1.4


def parse_profile_arg(text: str) -> DegradationProfile:
    """``neutral`` or comma-separated ``field=value`` pairs (unset fields are 0)."""
    text = text.strip()
    if text == "neutral":
        return DegradationProfile()
    values = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in FIELD_NAMES:
            raise ValidationError(f"bad profile item {item!r}; expected field=value with field in {', '.join(FIELD_NAMES)}")
        try:
            values[key] = int(val) if key == "theta_band" else float(val)
        except ValueError:
            raise ValidationError(f"bad number in profile item {item!r}") from None
    return ensure_valid(DegradationProfile(**values))


def brighten_preview(v: VideoTensor, gain: float = PREVIEW_GAIN) -> VideoTensor:
    """Brightness then contrast (about mid-grey) each raised by 40%; display only."""
    x = np.clip(v.data * gain, 0.0, 1.0)
    x = np.clip((x - 0.5) * gain + 0.5, 0.0, 1.0)
    return v.with_data(x)


def _clip_name(args) -> str:
    return "clip" + RAW_SUFFIX if args.format == "raw" else "frames"


def _input_colorspace(args) -> Colorspace:
    return Colorspace.LINEAR_RGB if getattr(args, "linear_input", False) else Colorspace.ENCODED_SRGB


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.profile is not None:
        pool = profile_set_from([parse_profile_arg(args.profile)], "cli")
    else:
        pool = ProfileSet.load(args.profile_set)
    seed = SeedSpec(args.seed)
    clips = [read_clip(p, _input_colorspace(args)) for p in args.inputs]
    picks = draw_indices(pool, seed, len(clips))
    space = Colorspace.LINEAR_RGB if args.linear_output else Colorspace.ENCODED_SRGB

    with StagedDirectory(args.out, args.overwrite) as root:
        used = []
        for i, (clip, j) in enumerate(zip(clips, picks)):
            j = int(j)
            profile = pool[j]
            keep_stages = args.emit_intermediates or args.dump_noise
            req = SynthesisRequest(clip, profile, clip_seed(seed, i), space, keep_stages)
            res = synthesize(req, workers=args.workers)
            dest = root if len(clips) == 1 else root / f"{i:04d}"
            dest.mkdir(exist_ok=True)
            write_clip_into(dest, _clip_name(args), res.output, args.bit_depth)
            used.append((profile, pool.labels[j] or os.fspath(args.inputs[i])))
            if args.emit_intermediates:
                (dest / "intermediates").mkdir()
                for stage, v in res.intermediates.items():
                    write_clip_into(dest / "intermediates", stage + RAW_SUFFIX, v)
            if args.dump_noise:
                (dest / "noise").mkdir()
                for source, data in noise_components(res.intermediates["blur"], profile, req.seed).items():
                    write_clip_into(dest / "noise", source + RAW_SUFFIX, VideoTensor(data, Colorspace.LINEAR_RGB))
            if args.brighten_preview:
                shown = res.output if space is Colorspace.ENCODED_SRGB else encode(res.output)
                write_clip_into(dest, "preview", brighten_preview(shown), 8)
        (root / "profile.tsv").write_text(
            ProfileSet(tuple(p for p, _ in used), tuple(s for _, s in used)).to_text(), encoding="utf-8"
        )
    return EXIT_OK


def _as_linear(v: VideoTensor) -> VideoTensor:
    return linearize(v) if v.colorspace is Colorspace.ENCODED_SRGB else v


def cmd_estimate(args) -> int:
    low = _as_linear(read_clip(args.low, _input_colorspace(args)))
    high = _as_linear(read_clip(args.high, _input_colorspace(args)))
    report = estimate_profile(low, high)
    line = report.profile_line(args.label)
    if args.out:
        atomic_write_text(args.out, report.to_json() + "\n")
    if args.profile_out:
        atomic_write_text(args.profile_out, ProfileSet((report.profile_hat,), (args.label,)).to_text())
    print(line)
    return EXIT_OK


def cmd_sample_profiles(args) -> int:
    if args.n < 0:
        raise ValidationError("n must be >= 0")
    bounds = ProfileBounds.load(args.bounds) if args.bounds else ProfileBounds.default()
    profiles = sample_profiles(bounds, SeedSpec(args.seed), args.n)
    labels = tuple(f"uniform:seed={args.seed}:{i}" for i in range(args.n))
    text = ProfileSet(tuple(profiles), labels).to_text()
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _kernel_bytes(weights: np.ndarray, suffix: str) -> bytes:
    if suffix == ".npy":
        buf = io.BytesIO()
        np.save(buf, weights)
        return buf.getvalue()
    if suffix == ".png":
        img = np.rint(weights / weights.max() * 65535).astype(np.uint16)
        ok, enc = cv2.imencode(".png", img)
        if not ok:
            raise ClipIOError("cannot encode kernel image")
        return enc.tobytes()
    rows = ["\t".join(repr(float(w)) for w in row) for row in weights]
    return ("\n".join(rows) + "\n").encode("utf-8")


def cmd_kernel_dump(args) -> int:
    if args.reference is not None:
        length, angle, defocus = args.reference
        kernel = build_reference_kernel(length, angle, defocus)
    else:
        kernel = build_mvg_kernel(args.sigma_x, args.sigma_y, args.theta)
    if args.out:
        atomic_write_bytes(args.out, _kernel_bytes(kernel.weights, Path(args.out).suffix.lower()))
    else:
        sys.stdout.write(_kernel_bytes(kernel.weights, ".txt").decode("utf-8"))
    return EXIT_OK


def _json_number(x):
    # psnr of identical clips is +inf; keep it representable
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def cmd_evaluate(args) -> int:
    if len(args.clips) % 2:
        raise ValidationError("evaluate takes clips in (candidate, reference) pairs")
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    for m in metrics:
        if m not in METRICS:
            raise ValidationError(f"unknown metric {m!r}; choose from {', '.join(METRICS)}")
    lines = []
    for a_path, b_path in zip(args.clips[::2], args.clips[1::2]):
        a = read_clip(a_path, _input_colorspace(args))
        b = read_clip(b_path, _input_colorspace(args))
        record = {"a": os.fspath(a_path), "b": os.fspath(b_path)}
        record.update({k: _json_number(v) for k, v in evaluate_pair(a, b, metrics, args.kld_mode).items()})
        lines.append(json.dumps(record))
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _workers(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return n


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one machine-parsable line instead of usage + message
        self.exit(EXIT_USAGE, f"error: usage: {self.prog}: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowlightsim", description="Low-light video synthesis and degradation estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_input_space(p):
        p.add_argument("--linear-input", action="store_true", help="treat frame-directory inputs as linear intensity")

    p = sub.add_parser("synth", help="degrade clips with a profile or a profile set")
    p.add_argument("inputs", nargs="+", type=Path, help="frame directories or .lvrw containers")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--profile", help="'neutral' or field=value pairs, e.g. epsilon=-3,sigma_read=0.01")
    src.add_argument("--profile-set", type=Path, help="profile-set file; one profile is drawn per clip")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", type=Path, required=True, help="output directory (created atomically)")
    p.add_argument("--overwrite", action="store_true", help="replace an existing output directory")
    p.add_argument("--linear-output", action="store_true", help="skip sRGB encoding of the result")
    p.add_argument("--emit-intermediates", action="store_true", help="also write exposure/blur/noisy stages as .lvrw")
    p.add_argument("--dump-noise", action="store_true", help="also write per-source noise maps as .lvrw")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=16, help="frame image bit depth (default 16)")
    p.add_argument("--format", choices=("frames", "raw"), default="frames", help="output clip format")
    p.add_argument("--brighten-preview", action="store_true", help="write an 8-bit preview with +40%% brightness and contrast")
    p.add_argument("--workers", type=_workers, default=1, help="threads per clip (output does not depend on it)")
    add_input_space(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate the degradation profile relating a low/high pair")
    p.add_argument("low", type=Path)
    p.add_argument("high", type=Path)
    p.add_argument("--out", type=Path, help="JSON report path")
    p.add_argument("--profile-out", type=Path, help="write the estimate as a one-line profile set")
    p.add_argument("--label", default="estimated", help="source label for the profile line")
    add_input_space(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sample-profiles", help="draw profiles uniformly from bounds")
    p.add_argument("-n", type=int, required=True, help="number of profiles")
    p.add_argument("--bounds", type=Path, help="bounds file (field lo hi); defaults when omitted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="profile-set file (stdout when omitted)")
    p.set_defaults(func=cmd_sample_profiles)

    p = sub.add_parser("kernel-dump", help="write a blur kernel as text, .npy or 16-bit .png")
    p.add_argument("--sigma-x", type=float, default=1.0)
    p.add_argument("--sigma-y", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument(
        "--reference", type=float, nargs=3, metavar=("LENGTH", "ANGLE", "DEFOCUS"),
        help="dump the line-motion plus defocus composite instead",
    )
    p.add_argument("--out", type=Path, help="output path (.txt/.tsv, .npy or .png); stdout when omitted")
    p.set_defaults(func=cmd_kernel_dump)

    p = sub.add_parser("evaluate", help="metric records for (candidate, reference) clip pairs")
    p.add_argument("clips", nargs="+", type=Path, help="A1 B1 [A2 B2 ...]")
    p.add_argument("--metrics", default=",".join(METRICS), help=f"comma list from {', '.join(METRICS)}")
    p.add_argument("--kld-mode", choices=sorted(HISTOGRAM_MODES), default="intensity")
    p.add_argument("--out", type=Path, help="JSON-lines output (stdout when omitted)")
    add_input_space(p)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LowLightError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return ClipIOError.exit_code


if __name__ == "__main__":
    sys.exit(main())
