"""HRTF sets and binaural scene rendering.

Azimuth convention: degrees, 0 = front, positive = right, -90 = left ear
axis.  Rendering is plain convolution with far-field HRIRs; there is no
room, elevation or distance modelling.

Synthetic HRTFs
---------------
Each ear is modelled as a point on a rigid sphere of radius ``a``.  With
``psi`` the angle between the source direction and that ear's axis, the ear
gets

* a one-pole/one-zero head-shadow shelf
  ``H(s) = (alpha * s + 2 w0) / (s + 2 w0)``, ``w0 = c / a``, digitised with
  the bilinear transform.  DC gain is 1 and the high-frequency gain is
  ``alpha(psi) = (1 + m/2) + (1 - m/2) cos psi`` with ``m`` the minimum
  shadow gain, i.e. +6 dB facing the source and ``20 log10 m`` dB opposite;
* a pure delay chosen so that the total low-frequency delay of the ear is
  ``a/c * (1 - cos psi)`` for ``psi < 90`` and ``a/c * (1 + psi - pi/2)``
  otherwise (``psi`` in radians).  The shelf's own DC group delay,
  ``(1 - alpha) / (2 w0)``, is subtracted from the pure delay for this.  The
  interaural delay then follows Woodworth's ``a/c * (sin theta + theta)``.

The default radius, ``0.2 / (1 + pi/2)`` m, makes the ear-to-ear delay at
+/-90 deg equal to 20 cm at 340 m/s, the spacing the beamformer assumes.

The optional bright spot raises ``alpha`` back towards ``bright_spot_gain``
once the source is more than ``90 - bright_spot_onset`` degrees past the
ear's contralateral axis, which makes the natural ILD fold over near +/-90.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import signal
from scipy.io import wavfile

from .dsp import (DEFAULT_SAMPLE_RATE, FRACDELAY_HALF_WIDTH, BinauralBuffer, FirFilter, SampleBuffer,
                  _fracdelay_taps, convolve)
from .errors import DataError, ParameterError

EXPERIMENT_ANGLES = tuple(range(-90, 91, 15))
FULL_CIRCLE_ANGLES = tuple(range(-180, 180, 15))

#: Sphere whose around-the-head path between the ears is 20 cm.
MATCHED_HEAD_RADIUS = 0.2 / (1 + math.pi / 2)

_FILE_RE = re.compile(r"^az([+-]?\d+)_([LR])\.(wav|f32|raw)$", re.IGNORECASE)


@dataclass(frozen=True)
class SphericalHeadModel:
    head_radius: float = MATCHED_HEAD_RADIUS
    speed_of_sound: float = 340.0
    min_shadow_gain: float = 0.1
    bright_spot: bool = False
    bright_spot_onset: float = 75.0
    bright_spot_gain: float = 0.3
    ir_length: int = 256
    # leading samples so that the windowed-sinc placement stays causal
    bulk_delay: int = FRACDELAY_HALF_WIDTH + 1

    def __post_init__(self):
        if self.head_radius <= 0 or self.speed_of_sound <= 0:
            raise ParameterError("head_radius and speed_of_sound must be positive")
        if not 0 < self.min_shadow_gain <= 1:
            raise ParameterError("min_shadow_gain must be in (0, 1]")
        if not 0 < self.bright_spot_onset < 90:
            raise ParameterError("bright_spot_onset must be in (0, 90) degrees")


@dataclass(frozen=True, eq=False)
class HrtfSet:
    """Azimuth-indexed ``(left_ir, right_ir)`` pairs, immutable once built."""

    irs: Mapping[int, tuple[FirFilter, FirFilter]]
    sample_rate: int
    source: str = "synthetic"
    truncated: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        irs = {}
        for az, pair in self.irs.items():
            left, right = pair
            for ir in (left, right):
                if ir.sample_rate != self.sample_rate:
                    raise DataError(f"IR at {az:+d} has sample rate {ir.sample_rate}, set is {self.sample_rate}")
            irs[int(az)] = (left, right)
        object.__setattr__(self, "irs", dict(sorted(irs.items())))

    @property
    def angles(self) -> list[int]:
        return list(self.irs)

    def __contains__(self, azimuth) -> bool:
        return int(azimuth) in self.irs

    def pair(self, azimuth) -> tuple[FirFilter, FirFilter]:
        try:
            return self.irs[int(azimuth)]
        except KeyError:
            raise ParameterError(f"HRTF set has no entry for azimuth {int(azimuth):+d} deg") from None

    @property
    def max_ir_length(self) -> int:
        return max(max(len(l), len(r)) for l, r in self.irs.values())


@dataclass(frozen=True, eq=False)
class Source:
    azimuth: int
    signal: SampleBuffer
    level_offset: float = 0.0


@dataclass(frozen=True, eq=False)
class Scene:
    sources: tuple[Source, ...]
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        rates = {s.signal.sample_rate for s in self.sources}
        if len(rates) > 1:
            raise ParameterError(f"scene sources have mixed sample rates {sorted(rates)}")

    @property
    def sample_rate(self) -> int:
        return self.sources[0].signal.sample_rate

    def scaled(self, gain_db: float) -> Scene:
        return Scene([Source(s.azimuth, s.signal, s.level_offset + gain_db) for s in self.sources],
                     self.description)


def _wrap(deg: float) -> float:
    return (deg + 180.0) % 360.0 - 180.0


def ear_incidence(azimuth: float, ear: str) -> float:
    """Angle (deg, 0..180) between the source direction and the given ear's axis."""
    axis = 90.0 if ear == "right" else -90.0
    if ear not in ("left", "right"):
        raise ParameterError(f"ear must be 'left' or 'right', got {ear!r}")
    return abs(_wrap(azimuth - axis))


def ear_delay(psi_deg: float, model: SphericalHeadModel) -> float:
    """Low-frequency propagation delay (s) to an ear at incidence ``psi``, offset so that it is >= 0."""
    a_c = model.head_radius / model.speed_of_sound
    psi = math.radians(psi_deg)
    if psi < math.pi / 2:
        return a_c * (1 - math.cos(psi))
    return a_c * (1 + psi - math.pi / 2)


def shadow_gain(psi_deg: float, model: SphericalHeadModel) -> float:
    """High-frequency gain ``alpha`` of the head-shadow shelf at incidence ``psi``."""
    m = model.min_shadow_gain
    alpha = (1 + m / 2) + (1 - m / 2) * math.cos(math.radians(psi_deg))
    if model.bright_spot:
        start = 180.0 - (90.0 - model.bright_spot_onset)
        if psi_deg > start:
            w = math.sin(0.5 * math.pi * (psi_deg - start) / (180.0 - start)) ** 2
            alpha += (model.bright_spot_gain - alpha) * w
    return alpha


def shelf_group_delay(psi_deg: float, model: SphericalHeadModel) -> float:
    """Group delay (s) of the head-shadow shelf at DC."""
    return (1 - shadow_gain(psi_deg, model)) * model.head_radius / (2 * model.speed_of_sound)


def _ear_ir(psi_deg: float, sample_rate: int, model: SphericalHeadModel) -> np.ndarray:
    pure = ear_delay(psi_deg, model) - shelf_group_delay(psi_deg, model)
    pos = model.bulk_delay + pure * sample_rate
    whole = int(round(pos))
    frac = pos - whole
    taps = _fracdelay_taps(frac)
    h = np.zeros(model.ir_length)
    lo = whole - FRACDELAY_HALF_WIDTH
    if lo < 0 or lo + taps.size > model.ir_length:
        raise ParameterError("ir_length too short for the head model's delays")
    h[lo: lo + taps.size] = taps
    w0 = model.speed_of_sound / model.head_radius
    b, a = signal.bilinear([shadow_gain(psi_deg, model), 2 * w0], [1.0, 2 * w0], fs=sample_rate)
    return signal.lfilter(b, a, h)


def synth_spherical_hrtf(azimuth: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
                         head_radius: float = MATCHED_HEAD_RADIUS, speed_of_sound: float = 340.0,
                         model: SphericalHeadModel | None = None) -> tuple[FirFilter, FirFilter]:
    """Left/right HRIRs of the spherical-head model for one azimuth."""
    if not -180 <= azimuth < 180:
        raise ParameterError(f"azimuth must be in [-180, 180), got {azimuth}")
    if model is None:
        model = SphericalHeadModel(head_radius=head_radius, speed_of_sound=speed_of_sound)
    left = _ear_ir(ear_incidence(azimuth, "left"), sample_rate, model)
    right = _ear_ir(ear_incidence(azimuth, "right"), sample_rate, model)
    return FirFilter(left, sample_rate), FirFilter(right, sample_rate)


def synthetic_hrtf_set(angles: Iterable[int] = FULL_CIRCLE_ANGLES, sample_rate: int = DEFAULT_SAMPLE_RATE,
                       model: SphericalHeadModel | None = None) -> HrtfSet:
    model = model or SphericalHeadModel()
    irs = {int(az): synth_spherical_hrtf(az, sample_rate, model=model) for az in angles}
    return HrtfSet(irs, sample_rate, "synthetic", False,
                   {"head_radius": model.head_radius, "speed_of_sound": model.speed_of_sound,
                    "min_shadow_gain": model.min_shadow_gain, "bright_spot": model.bright_spot,
                    "bright_spot_onset": model.bright_spot_onset,
                    "bright_spot_gain": model.bright_spot_gain})


@lru_cache(maxsize=8)
def bundled_hrtf_set(sample_rate: int = DEFAULT_SAMPLE_RATE, bright_spot: bool = False) -> HrtfSet:
    """The default synthetic set used by experiments and the CLI (full circle, 15 deg grid).

    The localization recipes switch the bright spot on.  Cached; treat the
    result as read-only.
    """
    return synthetic_hrtf_set(FULL_CIRCLE_ANGLES, sample_rate, SphericalHeadModel(bright_spot=bright_spot))


def truncate_ir(ir: FirFilter, window: float = 0.002) -> FirFilter:
    """Keep everything up to ``window`` seconds after the largest tap.

    Samples before the peak are kept.  An IR that already ends within the
    window is returned unchanged.
    """
    if not np.any(ir.taps):
        raise DataError("cannot truncate an all-zero impulse response")
    peak = int(np.argmax(np.abs(ir.taps)))
    end = peak + int(round(window * ir.sample_rate)) + 1
    if end >= len(ir):
        return ir
    return FirFilter(ir.taps[:end], ir.sample_rate, ir.group_delay_samples)


def truncate_hrtf_set(hrtfs: HrtfSet, window: float = 0.002) -> HrtfSet:
    irs = {az: (truncate_ir(l, window), truncate_ir(r, window)) for az, (l, r) in hrtfs.irs.items()}
    return HrtfSet(irs, hrtfs.sample_rate, hrtfs.source, True, dict(hrtfs.metadata))


def _read_ir(path: Path, sample_rate: int | None) -> tuple[np.ndarray, int]:
    try:
        if path.suffix.lower() == ".wav":
            fs, data = wavfile.read(path)
            if data.ndim > 1:
                raise DataError(f"{path.name}: expected a mono file, got {data.shape[1]} channels")
            if data.dtype == np.int16:
                data = data / 32768.0
            elif data.dtype == np.int32:
                data = data / 2147483648.0
            return np.asarray(data, dtype=np.float64), int(fs)
        if sample_rate is None:
            raise DataError(f"{path.name}: raw float32 IRs need a manifest.json with sample_rate")
        return np.fromfile(path, dtype="<f4").astype(np.float64), int(sample_rate)
    except (OSError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_hrtf_set(path, required_angles: Iterable[int] = EXPERIMENT_ANGLES) -> HrtfSet:
    """Load ``az{angle}_{L|R}.wav`` (or ``.f32``) files from a directory.

    An optional ``manifest.json`` may give ``sample_rate`` (needed for raw
    float32 files) and ``angles``, which then replaces ``required_angles``.
    """
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"HRTF directory not found: {root}")
    manifest = {}
    if (root / "manifest.json").exists():
        try:
            manifest = json.loads((root / "manifest.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"bad manifest.json: {exc}") from exc
    required = [int(a) for a in manifest.get("angles", required_angles)]
    declared_fs = manifest.get("sample_rate")

    found: dict[tuple[int, str], tuple[np.ndarray, int]] = {}
    for f in sorted(root.iterdir()):
        m = _FILE_RE.match(f.name)
        if m:
            found[(int(m.group(1)), m.group(2).upper())] = _read_ir(f, declared_fs)

    if not found and not required:
        raise DataError(f"no az*_L/R IR files in {root}")
    missing = [f"{az:+d}/{name}" for az in required
               for ear, name in (("L", "left"), ("R", "right")) if (az, ear) not in found]
    angles = sorted({az for az, _ in found})
    missing += [f"{az:+d}/{name}" for az in angles if az not in required
                for ear, name in (("L", "left"), ("R", "right")) if (az, ear) not in found]
    if missing:
        raise DataError("HRTF set incomplete, missing: " + ", ".join(missing))

    rates = {fs for _, fs in found.values()}
    if declared_fs is not None:
        rates.add(int(declared_fs))
    if len(rates) != 1:
        raise DataError(f"sample-rate mismatch across HRTF files: {sorted(rates)}")
    fs = rates.pop()
    irs = {az: (FirFilter(found[(az, "L")][0], fs), FirFilter(found[(az, "R")][0], fs)) for az in angles}
    return HrtfSet(irs, fs, "imported", False, {"path": str(root)})


def save_hrtf_set(hrtfs: HrtfSet, path) -> Path:
    """Write a set in the directory layout :func:`load_hrtf_set` reads (float32 WAV)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for az, (left, right) in hrtfs.irs.items():
        for ear, ir in (("L", left), ("R", right)):
            wavfile.write(root / f"az{az:+d}_{ear}.wav", hrtfs.sample_rate, ir.taps.astype(np.float32))
    (root / "manifest.json").write_text(json.dumps(
        {"sample_rate": hrtfs.sample_rate, "angles": hrtfs.angles}, indent=2))
    return root


def render_scene(scene: Scene, hrtfs: HrtfSet) -> BinauralBuffer:
    """Sum of every source convolved with its left/right HRIR.

    Output length is the longest source plus the longest IR used, minus one.
    """
    if not scene.sources:
        raise ParameterError("scene has no sources")
    for s in scene.sources:
        hrtfs.pair(s.azimuth)
    fs = scene.sample_rate
    if fs != hrtfs.sample_rate:
        raise ParameterError(f"scene is {fs} Hz but HRTF set is {hrtfs.sample_rate} Hz")
    max_ir = max(max(len(ir) for ir in hrtfs.pair(s.azimuth)) for s in scene.sources)
    n = max(len(s.signal) for s in scene.sources) + max_ir - 1
    out = np.zeros((2, n))
    for s in scene.sources:
        x = s.signal.scaled(10 ** (s.level_offset / 20))
        for i, ir in enumerate(hrtfs.pair(s.azimuth)):
            y = convolve(x, ir).samples
            out[i, : y.size] += y
    return BinauralBuffer(SampleBuffer(out[0], fs), SampleBuffer(out[1], fs), {"scene": scene.description})


def render_source(x: SampleBuffer, azimuth: int, hrtfs: HrtfSet, level_offset: float = 0.0) -> BinauralBuffer:
    return render_scene(Scene([Source(azimuth, x, level_offset)], f"single@{azimuth:+d}"), hrtfs)


def condition_scenes(condition: str, speech: SampleBuffer, noise_factory, ci_side: str = "left",
                     n_surround: int = 24) -> tuple[Scene, Scene]:
    """Speech-only and noise-only scenes for S0NCI, S0NHA or S0N360.

    ``noise_factory(seed)`` returns one noise token; surround sources use seeds
    ``0..n_surround-1`` and are each attenuated by ``10 log10(n_surround)`` dB.
    """
    if ci_side not in ("left", "right"):
        raise ParameterError(f"ci_side must be 'left' or 'right', got {ci_side!r}")
    ci_az = -90 if ci_side == "left" else 90
    speech_scene = Scene([Source(0, speech)], f"{condition}:speech")
    if condition == "S0NCI":
        noise = [Source(ci_az, noise_factory(0))]
    elif condition == "S0NHA":
        noise = [Source(-ci_az, noise_factory(0))]
    elif condition == "S0N360":
        step = 360 // n_surround
        offset = -10 * math.log10(n_surround)
        noise = [Source(_wrap_int(az), noise_factory(i), offset)
                 for i, az in enumerate(range(-180, 180, step))]
    else:
        raise ParameterError(f"unknown condition {condition!r}")
    return speech_scene, Scene(noise, f"{condition}:noise")


def _wrap_int(az: int) -> int:
    return int(_wrap(az))
