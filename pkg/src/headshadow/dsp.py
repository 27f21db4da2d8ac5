"""Sample-accurate signal primitives.

Everything here is a pure function of its inputs.  Buffers are immutable
(their sample arrays are flagged read-only) and every operation returns a new
buffer.

Conventions
-----------
* Levels are in dBFS: a constant 1.0 signal has a level of 0 dB.
* Silence is reported as ``-inf`` dB rather than raising.
* IIR filters are second-order sections run in transposed direct form II
  (``scipy.signal.sosfilt``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import DataError, ParameterError

DEFAULT_SAMPLE_RATE = 44100

#: Digital level that stands in for the 65 dBA presentation level.
REFERENCE_LEVEL_DBFS = -25.0
REFERENCE_LEVEL_DBA = 65.0

#: Long-term spectrum estimate: Hann window, 4096-point segments, 50 % overlap.
WELCH_SEGMENT = 4096
WELCH_OVERLAP = 0.5

#: Crossover FIR: 513 taps at 44.1 kHz (scaled with the sample rate), Kaiser beta 10.
CROSSOVER_TAPS_44K = 513
CROSSOVER_KAISER_BETA = 10.0

#: Windowed-sinc fractional delay: 2*32+1 taps, Kaiser beta 8.
FRACDELAY_HALF_WIDTH = 32
FRACDELAY_KAISER_BETA = 8.0


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SampleBuffer:
    """Mono audio at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ParameterError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        x = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise DataError("buffer contains non-finite samples")
        object.__setattr__(self, "samples", _readonly(x))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def replace(self, samples) -> SampleBuffer:
        return SampleBuffer(samples, self.sample_rate)

    def scaled(self, gain: float) -> SampleBuffer:
        return SampleBuffer(self.samples * gain, self.sample_rate)

    def padded(self, length: int) -> SampleBuffer:
        """Zero-pad (never truncate) to ``length`` samples."""
        if length <= len(self):
            return self
        return SampleBuffer(np.concatenate([self.samples, np.zeros(length - len(self))]), self.sample_rate)


@dataclass(frozen=True, eq=False)
class BinauralBuffer:
    """Left/right pair of equal length and rate.  ``metadata`` is free-form."""

    left: SampleBuffer
    right: SampleBuffer
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.left.sample_rate != self.right.sample_rate:
            raise ParameterError(
                f"left/right sample rates differ ({self.left.sample_rate} vs {self.right.sample_rate})")
        if len(self.left) != len(self.right):
            raise ParameterError(f"left/right lengths differ ({len(self.left)} vs {len(self.right)})")

    @classmethod
    def from_arrays(cls, left, right, sample_rate: int = DEFAULT_SAMPLE_RATE, **metadata) -> BinauralBuffer:
        return cls(SampleBuffer(left, sample_rate), SampleBuffer(right, sample_rate), dict(metadata))

    @classmethod
    def diotic(cls, x: SampleBuffer) -> BinauralBuffer:
        return cls(x, x)

    @property
    def sample_rate(self) -> int:
        return self.left.sample_rate

    def __len__(self) -> int:
        return len(self.left)

    def ear(self, side: str) -> SampleBuffer:
        if side == "left":
            return self.left
        if side == "right":
            return self.right
        raise ParameterError(f"ear must be 'left' or 'right', got {side!r}")

    def swapped(self) -> BinauralBuffer:
        return BinauralBuffer(self.right, self.left, dict(self.metadata))

    def scaled(self, gain: float) -> BinauralBuffer:
        return BinauralBuffer(self.left.scaled(gain), self.right.scaled(gain), dict(self.metadata))

    def as_array(self) -> np.ndarray:
        """Samples as an ``(n, 2)`` array, left channel first."""
        return np.stack([self.left.samples, self.right.samples], axis=1)


@dataclass(frozen=True, eq=False)
class IirFilter:
    """Cascade of second-order sections, one row ``[b0 b1 b2 a0 a1 a2]`` per section.

    A first-order section is stored with ``b2 = a2 = 0``.
    """

    sos: np.ndarray
    order: int
    cutoff: float
    sample_rate: int

    def __post_init__(self):
        sos = np.array(self.sos, dtype=np.float64).reshape(-1, 6)
        object.__setattr__(self, "sos", _readonly(sos))
        radius = np.abs(self.poles())
        if radius.size and radius.max() >= 1 - 1e-6:
            raise ParameterError(f"unstable filter: max pole radius {radius.max():.9f}")

    def poles(self) -> np.ndarray:
        # roots of each section's denominator (a first-order section adds a pole at 0)
        return np.concatenate([np.roots(sec[3:]) for sec in self.sos]) if len(self.sos) else np.zeros(0)

    def response(self, freqs) -> np.ndarray:
        """Complex frequency response at ``freqs`` (Hz)."""
        _, h = signal.sosfreqz(self.sos, worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=self.sample_rate)
        return h


@dataclass(frozen=True, eq=False)
class FirFilter:
    taps: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE
    group_delay_samples: int | None = None

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64).reshape(-1)
        if taps.size == 0:
            raise ParameterError("FIR filter needs at least one tap")
        if not np.all(np.isfinite(taps)):
            raise DataError("FIR taps contain non-finite values")
        object.__setattr__(self, "taps", _readonly(taps))

    def __len__(self) -> int:
        return self.taps.shape[0]

    def response(self, freqs) -> np.ndarray:
        _, h = signal.freqz(self.taps, worN=np.atleast_1d(np.asarray(freqs, dtype=float)), fs=self.sample_rate)
        return h


def _check_cutoff(cutoff: float, sample_rate: int, name: str = "cutoff") -> None:
    if not 0 < cutoff < sample_rate / 2:
        raise ParameterError(f"{name} must lie in (0, {sample_rate / 2}) Hz, got {cutoff}")


def _normalise_dc(sos: np.ndarray) -> np.ndarray:
    sos = sos.copy()
    gain = np.prod(sos[:, :3].sum(axis=1) / sos[:, 3:].sum(axis=1))
    sos[0, :3] /= gain
    return sos


@lru_cache(maxsize=256)
def design_butterworth_lowpass(order: int, cutoff: float, sample_rate: int = DEFAULT_SAMPLE_RATE) -> IirFilter:
    """Digital Butterworth low-pass (bilinear transform) with unity DC gain.

    Designs are cached; the returned filter is read-only.
    """
    if int(order) != order or not 1 <= order <= 8:
        raise ParameterError(f"order must be an integer in 1..8, got {order!r}")
    _check_cutoff(cutoff, sample_rate)
    sos = signal.butter(int(order), cutoff, btype="lowpass", output="sos", fs=sample_rate)
    return IirFilter(_normalise_dc(sos), int(order), float(cutoff), int(sample_rate))


@lru_cache(maxsize=256)
def design_butterworth_bandpass(order: int, low: float, high: float,
                                sample_rate: int = DEFAULT_SAMPLE_RATE) -> IirFilter:
    """Butterworth band-pass of total order ``order`` (must be even).

    ``cutoff`` on the returned filter is the geometric band centre.
    """
    if int(order) != order or order < 2 or order % 2 or order > 16:
        raise ParameterError(f"band-pass order must be even and in 2..16, got {order!r}")
    _check_cutoff(low, sample_rate, "low edge")
    _check_cutoff(high, sample_rate, "high edge")
    if not low < high:
        raise ParameterError(f"band edges must increase, got {low}, {high}")
    sos = signal.butter(int(order) // 2, [low, high], btype="bandpass", output="sos", fs=sample_rate)
    return IirFilter(sos, int(order), float(np.sqrt(low * high)), int(sample_rate))


def apply_filter(filt: IirFilter | FirFilter, x: SampleBuffer, trim: bool = False) -> SampleBuffer:
    """Run ``x`` through ``filt``.

    IIR output has the input length.  FIR output is the full convolution
    (``len(x) + len(taps) - 1`` samples) unless ``trim`` is set, in which case
    it is cut to ``len(x)``.
    """
    if not np.all(np.isfinite(x.samples)):
        raise DataError("input contains non-finite samples")
    if isinstance(filt, IirFilter):
        if filt.sample_rate != x.sample_rate:
            raise ParameterError(f"filter designed for {filt.sample_rate} Hz, signal is {x.sample_rate} Hz")
        return x.replace(signal.sosfilt(np.array(filt.sos), x.samples))
    y = convolve(x, filt)
    return y.replace(y.samples[: len(x)]) if trim else y


def _fracdelay_taps(frac: float, half_width: int = FRACDELAY_HALF_WIDTH,
                    beta: float = FRACDELAY_KAISER_BETA) -> np.ndarray:
    # taps for offsets -half_width..half_width, centred on ``frac`` samples
    t = np.arange(-half_width, half_width + 1) - frac
    window = np.i0(beta * np.sqrt(np.clip(1 - (t / (half_width + 1)) ** 2, 0.0, None))) / np.i0(beta)
    h = np.sinc(t) * window
    return h / h.sum()


def delay_samples(x: np.ndarray, delay: float, half_width: int = FRACDELAY_HALF_WIDTH) -> np.ndarray:
    """Array-level worker for :func:`fractional_delay`; ``delay`` is in samples."""
    n = x.shape[0]
    whole = int(round(delay))
    frac = delay - whole
    out = np.zeros(n)
    if abs(frac) < 1e-9:
        if whole < n:
            out[whole:] = x[: n - whole]
        return out
    full = signal.convolve(x, _fracdelay_taps(frac, half_width))
    # out[k] = full[k - whole + half_width]
    start = half_width - whole
    lo = max(0, -start)
    hi = min(n, full.shape[0] - start)
    if hi > lo:
        out[lo:hi] = full[lo + start: hi + start]
    return out


def fractional_delay(x: SampleBuffer, delay: float) -> SampleBuffer:
    """Delay ``x`` by ``delay`` seconds, keeping its length.

    Whole samples are shifted exactly.  A remaining fraction is realised with a
    65-tap Kaiser-windowed sinc centred on the target position; it reads up to
    32 samples ahead (the processing is offline).  Timing error below 1.5 kHz
    is a few nanoseconds at 44.1 kHz.
    """
    if delay < 0:
        raise ParameterError(f"delay must be non-negative, got {delay}")
    if delay == 0:
        return x
    return x.replace(delay_samples(x.samples, delay * x.sample_rate))


@lru_cache(maxsize=32)
def crossover_fir(crossover: float, sample_rate: int = DEFAULT_SAMPLE_RATE) -> FirFilter:
    """Linear-phase low-pass used by :func:`band_split` (odd length, so integer group delay)."""
    _check_cutoff(crossover, sample_rate, "crossover")
    ntaps = int(round((CROSSOVER_TAPS_44K - 1) * sample_rate / 44100 / 2)) * 2 + 1
    h = signal.firwin(ntaps, crossover, window=("kaiser", CROSSOVER_KAISER_BETA), fs=sample_rate)
    h = 0.5 * (h + h[::-1])
    return FirFilter(h, sample_rate, (ntaps - 1) // 2)


def band_split(x: SampleBuffer, crossover: float) -> tuple[SampleBuffer, SampleBuffer]:
    """Split ``x`` into complementary low and high bands.

    ``low`` is the linear-phase FIR low-pass output and ``high`` is
    ``x`` delayed by the FIR group delay ``D`` minus ``low``, so that
    ``low + high`` reproduces ``x`` delayed by ``D`` samples.  Both outputs have
    the length of ``x``; ``D`` is ``crossover_fir(crossover, fs).group_delay_samples``.
    """
    fir = crossover_fir(float(crossover), x.sample_rate)
    n = len(x)
    low = signal.oaconvolve(x.samples, fir.taps)[:n] if n else np.zeros(0)
    d = fir.group_delay_samples
    delayed = np.zeros(n)
    delayed[d:] = x.samples[: max(0, n - d)]
    return x.replace(low), x.replace(delayed - low)


def _direct_convolve(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    return np.convolve(x, h)


def convolve(x: SampleBuffer, ir: FirFilter, method: str = "auto") -> SampleBuffer:
    """Full linear convolution, ``len(x) + len(ir) - 1`` samples.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"`` (direct for short
    IRs, where it is also bit-exact for a unit impulse).
    """
    if ir.sample_rate != x.sample_rate:
        raise ParameterError(f"sample-rate mismatch: signal {x.sample_rate} Hz, IR {ir.sample_rate} Hz")
    if len(x) == 0:
        return x.replace(np.zeros(0))
    if method == "auto":
        method = "direct" if min(len(x), len(ir)) <= 64 else "fft"
    if method == "direct":
        y = _direct_convolve(x.samples, ir.taps)
    elif method == "fft":
        y = signal.fftconvolve(x.samples, ir.taps)
    else:
        raise ParameterError(f"unknown convolution method {method!r}")
    return x.replace(y)


def rms_level_db(x: SampleBuffer | np.ndarray) -> float:
    """RMS level in dBFS; ``-inf`` for an empty or all-zero buffer."""
    s = x.samples if isinstance(x, SampleBuffer) else np.asarray(x, dtype=float)
    if s.size == 0:
        return float("-inf")
    ms = float(np.mean(s * s))
    return 10 * np.log10(ms) if ms > 0 else float("-inf")


def power_spectrum(x: SampleBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Welch power spectral density (one-sided, per Hz) with the module's fixed settings."""
    n = len(x)
    nperseg = min(WELCH_SEGMENT, n)
    f, pxx = signal.welch(x.samples, fs=x.sample_rate, window="hann", nperseg=nperseg,
                          noverlap=int(nperseg * WELCH_OVERLAP), detrend=False,
                          scaling="density", return_onesided=True)
    return f, pxx


def band_powers(x: SampleBuffer, band_edges: Sequence[float]) -> list[float]:
    """Long-term power (dBFS) in each band ``[edge_i, edge_i+1)``.

    Estimated by Welch averaging (Hann, 4096-point segments, 50 % overlap);
    bins are assigned to a band by their centre frequency.  A band with no
    power gets ``-inf``.
    """
    edges = np.asarray(band_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ParameterError("need at least two band edges")
    if np.any(np.diff(edges) <= 0):
        raise ParameterError("band edges must be strictly increasing")
    if edges[0] <= 0 or edges[-1] >= x.sample_rate / 2:
        raise ParameterError(f"band edges must lie inside (0, {x.sample_rate / 2}) Hz")
    if len(x) == 0:
        return [float("-inf")] * (edges.size - 1)
    f, pxx = power_spectrum(x)
    df = f[1] - f[0] if f.size > 1 else x.sample_rate
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        p = float(pxx[(f >= lo) & (f < hi)].sum() * df)
        out.append(10 * np.log10(p) if p > 0 else float("-inf"))
    return out


def tone(freq: float, duration: float, sample_rate: int = DEFAULT_SAMPLE_RATE,
         amplitude: float = 1.0, phase: float = 0.0) -> SampleBuffer:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return SampleBuffer(amplitude * np.sin(2 * np.pi * freq * t + phase), sample_rate)


def white_noise(duration: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE,
                level_db: float = REFERENCE_LEVEL_DBFS) -> SampleBuffer:
    """Gaussian white noise scaled to exactly ``level_db`` dBFS RMS."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(round(duration * sample_rate)))
    x *= 10 ** (level_db / 20) / np.sqrt(np.mean(x * x))
    return SampleBuffer(x, sample_rate)
