"""Stimulus generation: speech-shaped noise and on/off ramps."""

from __future__ import annotations

import numpy as np

from .dsp import DEFAULT_SAMPLE_RATE, REFERENCE_LEVEL_DBFS, SampleBuffer


def speech_spectrum_gain(freqs: np.ndarray) -> np.ndarray:
    """Amplitude shape of the stand-in long-term speech spectrum.

    +12 dB/octave up to 100 Hz, flat 100-500 Hz, -6 dB/octave above 500 Hz.
    """
    f = np.asarray(freqs, dtype=float)
    g = np.ones_like(f)
    lo = f < 100
    g[lo] = (f[lo] / 100.0) ** 2
    hi = f > 500
    g[hi] = 500.0 / f[hi]
    return g


def speech_shaped_noise(duration: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE,
                        level_db: float = REFERENCE_LEVEL_DBFS) -> SampleBuffer:
    """Gaussian noise with the speech-like spectrum, normalised to ``level_db`` dBFS."""
    n = int(round(duration * sample_rate))
    rng = np.random.default_rng(seed)
    spec = np.fft.rfft(rng.standard_normal(n))
    spec *= speech_spectrum_gain(np.fft.rfftfreq(n, 1 / sample_rate))
    x = np.fft.irfft(spec, n)
    x *= 10 ** (level_db / 20) / np.sqrt(np.mean(x * x))
    return SampleBuffer(x, sample_rate)


def raised_cosine_ramp(x: SampleBuffer, ramp: float = 0.05) -> SampleBuffer:
    """Apply raised-cosine onset and offset ramps of ``ramp`` seconds each."""
    n = min(int(round(ramp * x.sample_rate)), len(x) // 2)
    if n == 0:
        return x
    w = np.ones(len(x))
    r = 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)
    w[:n] = r
    w[len(x) - n:] = r[::-1]
    return x.replace(x.samples * w)


def default_stimulus(seed: int = 0, sample_rate: int = DEFAULT_SAMPLE_RATE,
                     duration: float = 0.5) -> SampleBuffer:
    """Word-length stand-in: 500 ms speech-shaped noise with 50 ms ramps."""
    return raised_cosine_ramp(speech_shaped_noise(duration, seed, sample_rate), 0.05)
