"""Head-shadow enhancement: a per-ear low-frequency delay-and-subtract beamformer.

Each device receives the low band of the other ear over an (ideal) link.
The contralateral low band is delayed by the acoustic travel time across the
head, ``tau = mic_spacing / speed_of_sound``, and subtracted from the own low
band.  That places the null of an end-fire pair on the contralateral axis.
The difference signal rolls off at 6 dB/octave towards DC, so it is passed
through a DC-normalised Butterworth low-pass at ``boost_cutoff`` and a fixed
gain.  The gain is chosen so that a plane wave from the ipsilateral side
(+90 deg for the right ear) keeps its unprocessed level at 200 Hz.  Above the
crossover the signal is passed through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .dsp import (DEFAULT_SAMPLE_RATE, BinauralBuffer, SampleBuffer, band_powers, band_split, crossover_fir,
                  delay_samples, design_butterworth_lowpass, white_noise)
from .errors import ParameterError
from .spatial import HrtfSet, render_source


@dataclass(frozen=True)
class BeamformerParams:
    crossover: float = 1500.0
    mic_spacing: float = 0.20
    speed_of_sound: float = 340.0
    boost_cutoff: float = 50.0
    boost_order: int = 1  # 0 disables the boost (raw difference signal)
    enabled: bool = True
    reference_frequency: float = 200.0

    def __post_init__(self):
        if self.mic_spacing <= 0 or self.speed_of_sound <= 0:
            raise ParameterError("mic_spacing and speed_of_sound must be positive")
        if self.crossover <= 0:
            raise ParameterError("crossover must be positive")
        if not 0 <= self.boost_order <= 8:
            raise ParameterError("boost_order must be in 0..8")

    @property
    def delay(self) -> float:
        """Electronic inter-device delay ``tau`` in seconds."""
        return self.mic_spacing / self.speed_of_sound


def comb_null_frequencies(p: BeamformerParams, k_max: int) -> list[float]:
    """Nulls ``k / (2 tau)`` of the ipsilateral end-fire response, k = 1..k_max."""
    if k_max < 1:
        raise ParameterError("k_max must be >= 1")
    return [k / (2 * p.delay) for k in range(1, k_max + 1)]


def boost_gain(p: BeamformerParams, sample_rate: int = DEFAULT_SAMPLE_RATE) -> float:
    """Broadband gain applied after the boost filter (1 when the boost is off)."""
    if p.boost_order == 0:
        return 1.0
    lp = design_butterworth_lowpass(p.boost_order, p.boost_cutoff, sample_rate)
    w = 2 * np.pi * p.reference_frequency
    subtractive = abs(1 - np.exp(-2j * w * p.delay))
    return float(1.0 / (subtractive * abs(lp.response(p.reference_frequency)[0])))


def _boost(x: np.ndarray, p: BeamformerParams, sample_rate: int) -> np.ndarray:
    if p.boost_order == 0:
        return x
    from scipy.signal import sosfilt

    lp = design_butterworth_lowpass(p.boost_order, p.boost_cutoff, sample_rate)
    return boost_gain(p, sample_rate) * sosfilt(np.array(lp.sos), x)


def _check_pair(x: BinauralBuffer, p: BeamformerParams) -> None:
    if not 0 < p.crossover < x.sample_rate / 2:
        raise ParameterError(f"crossover {p.crossover} Hz outside (0, {x.sample_rate / 2})")


def enhance_bands(x: BinauralBuffer, p: BeamformerParams, align: bool = True
                  ) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Per-ear ``(processed_low, high)`` arrays; :func:`head_shadow_enhance` sums them.

    With ``align`` the crossover latency is removed so the outputs line up
    with the input (offline processing).
    """
    _check_pair(x, p)
    fs, n = x.sample_rate, len(x)
    d = crossover_fir(float(p.crossover), fs).group_delay_samples if align else 0
    bands = []
    for ear in (x.left, x.right):
        padded = ear.padded(n + d)
        low, high = band_split(padded, p.crossover)
        bands.append((low.samples, high.samples))
    (low_l, high_l), (low_r, high_r) = bands
    if p.enabled:
        tau = p.delay * fs
        out_l = _boost(low_l - delay_samples(low_r, tau), p, fs)
        out_r = _boost(low_r - delay_samples(low_l, tau), p, fs)
    else:
        out_l, out_r = low_l, low_r
    cut = slice(d, d + n)
    return (out_l[cut], high_l[cut]), (out_r[cut], high_r[cut])


def head_shadow_enhance(x: BinauralBuffer, p: BeamformerParams = BeamformerParams(),
                        align: bool = True) -> BinauralBuffer:
    """Apply head-shadow enhancement to both ears.

    Output length equals input length.  The two ears go through identical
    filters, so their group delays match.  With ``p.enabled`` false the
    signal only passes the band split and recombination.
    """
    (ll, hl), (lr, hr) = enhance_bands(x, p, align)
    meta = dict(x.metadata, enhanced=p.enabled)
    return BinauralBuffer(SampleBuffer(ll + hl, x.sample_rate), SampleBuffer(lr + hr, x.sample_rate), meta)


def plane_wave(x: SampleBuffer, azimuth: float, p: BeamformerParams) -> BinauralBuffer:
    """Free-field two-point array: the far microphone lags by ``tau * sin(azimuth)``."""
    lag = p.delay * np.sin(np.radians(azimuth)) * x.sample_rate
    left = delay_samples(x.samples, max(0.0, lag))
    right = delay_samples(x.samples, max(0.0, -lag))
    return BinauralBuffer(SampleBuffer(left, x.sample_rate), SampleBuffer(right, x.sample_rate))


def directivity_pattern(p: BeamformerParams, band: tuple[float, float], angles: Iterable[float],
                        mode: str | HrtfSet = "freefield", ear: str = "right", processed: bool = True,
                        duration: float = 2.0, seed: int = 0,
                        sample_rate: int | None = None) -> dict[float, float]:
    """Band power (dB) per incidence angle, relative to the unprocessed 0 deg input.

    The stimulus is white noise rendered from each angle, either as a
    free-field plane wave on the two-point array (``mode="freefield"``) or
    through an :class:`HrtfSet`.  ``processed=False`` gives the natural
    pattern of the same renders.
    """
    hrtfs = None if isinstance(mode, str) else mode
    if hrtfs is None and mode != "freefield":
        raise ParameterError(f"mode must be 'freefield' or an HrtfSet, got {mode!r}")
    fs = sample_rate or (hrtfs.sample_rate if hrtfs is not None else DEFAULT_SAMPLE_RATE)
    lo, hi = band
    if not 0 < lo < hi < fs / 2:
        raise ParameterError(f"band {band} must lie inside (0, {fs / 2}) Hz")
    angles = list(angles)
    if hrtfs is not None:
        for a in [0, *angles]:
            hrtfs.pair(a)
    noise = white_noise(duration, seed, fs)

    def render(az):
        return plane_wave(noise, az, p) if hrtfs is None else render_source(noise, int(az), hrtfs)

    # skip the edges, where filters and delays are still filling up
    trim = int(0.05 * fs)

    def power(b: BinauralBuffer) -> float:
        s = b.ear(ear).samples[trim: len(b) - trim]
        return band_powers(SampleBuffer(s, fs), [lo, hi])[0]

    reference = power(render(0))
    chain = p if processed else replace(p, enabled=False)
    return {a: power(head_shadow_enhance(render(a), chain)) - reference for a in angles}
