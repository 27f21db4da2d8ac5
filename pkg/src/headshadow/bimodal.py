"""Acoustic simulation of bimodal listening.

The implanted ear hears a noise-band vocoder; the other ear hears a steep
low-pass standing in for a ski-slope hearing loss.

Vocoder details (fixed so that results are reproducible):

* analysis and carrier filters: fourth-order Butterworth prototypes turned
  into band-passes (order 8 overall) between log-spaced edges;
* envelope: half-wave rectification followed by a third-order Butterworth
  low-pass at ``env_cutoff``;
* each channel's output (envelope times band-limited noise) is rescaled to
  the RMS of that channel's analysis-band input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .dsp import (BinauralBuffer, SampleBuffer, apply_filter, design_butterworth_bandpass,
                  design_butterworth_lowpass, REFERENCE_LEVEL_DBFS, rms_level_db)
from .errors import ParameterError


@dataclass(frozen=True)
class VocoderParams:
    n_channels: int = 8
    f_low: float = 125.0
    f_high: float = 8000.0
    env_cutoff: float = 50.0
    env_order: int = 3
    filter_order: int = 8  # band-pass order, twice the prototype order
    seed: int = 0

    def __post_init__(self):
        if int(self.n_channels) != self.n_channels or self.n_channels < 1:
            raise ParameterError(f"n_channels must be a positive integer, got {self.n_channels!r}")
        if not 0 < self.f_low < self.f_high:
            raise ParameterError(f"need 0 < f_low < f_high, got {self.f_low}, {self.f_high}")

    def edges(self) -> np.ndarray:
        return np.geomspace(self.f_low, self.f_high, self.n_channels + 1)


@dataclass(frozen=True)
class HearingLossParams:
    order: int = 6
    cutoff: float = 500.0


def analysis_filters(p: VocoderParams, sample_rate: int):
    e = p.edges()
    return [design_butterworth_bandpass(p.filter_order, lo, hi, sample_rate) for lo, hi in zip(e[:-1], e[1:])]


def _sosfilt(filt, x: np.ndarray) -> np.ndarray:
    return signal.sosfilt(np.array(filt.sos), x)


def channel_envelopes(x: SampleBuffer, p: VocoderParams) -> list[np.ndarray]:
    """Smoothed half-wave-rectified envelope of every analysis band."""
    lp = design_butterworth_lowpass(p.env_order, p.env_cutoff, x.sample_rate)
    return [_sosfilt(lp, np.maximum(_sosfilt(bp, x.samples), 0.0)) for bp in analysis_filters(p, x.sample_rate)]


def vocode_channels(x: SampleBuffer, p: VocoderParams = VocoderParams()) -> list[np.ndarray]:
    """Per-channel vocoder outputs before summation."""
    if len(x) == 0:
        raise ParameterError("cannot vocode an empty buffer")
    rng = np.random.default_rng(p.seed)
    lp = design_butterworth_lowpass(p.env_order, p.env_cutoff, x.sample_rate)
    out = []
    for bp in analysis_filters(p, x.sample_rate):
        band = _sosfilt(bp, x.samples)
        env = _sosfilt(lp, np.maximum(band, 0.0))
        carrier = _sosfilt(bp, rng.standard_normal(len(x)))
        ch = env * carrier
        rms_out = np.sqrt(np.mean(ch * ch))
        if rms_out > 0:
            ch *= np.sqrt(np.mean(band * band)) / rms_out
        out.append(ch)
    return out


def vocode(x: SampleBuffer, p: VocoderParams = VocoderParams()) -> SampleBuffer:
    """Noise-band vocoder; deterministic for a given ``p.seed``."""
    return x.replace(np.sum(vocode_channels(x, p), axis=0))


def hearing_loss_filter(x: SampleBuffer, p: HearingLossParams = HearingLossParams()) -> SampleBuffer:
    return apply_filter(design_butterworth_lowpass(p.order, p.cutoff, x.sample_rate), x)


def simulate_bimodal(x: BinauralBuffer, ci_side: str = "left", voc: VocoderParams = VocoderParams(),
                     hl: HearingLossParams = HearingLossParams(),
                     ear_gains_db: tuple[float, float] = (0.0, 0.0)) -> BinauralBuffer:
    """Vocode the CI ear, low-pass the other, then apply per-ear ``(left, right)`` gains.

    The gains default to 0 dB; :func:`bimodal_calibration` computes the values
    that put a frontal reference at the same level in both ears.
    """
    if ci_side not in ("left", "right"):
        raise ParameterError(f"ci_side must be 'left' or 'right', got {ci_side!r}")
    ci = vocode(x.ear(ci_side), voc)
    ha = hearing_loss_filter(x.ear("right" if ci_side == "left" else "left"), hl)
    left, right = (ci, ha) if ci_side == "left" else (ha, ci)
    gl, gr = ear_gains_db
    if gl:
        left = left.scaled(10 ** (gl / 20))
    if gr:
        right = right.scaled(10 ** (gr / 20))
    meta = dict(x.metadata, ci_side=ci_side,
                left="vocoder" if ci_side == "left" else "hearing_loss",
                right="vocoder" if ci_side == "right" else "hearing_loss",
                vocoder_channels=voc.n_channels)
    return BinauralBuffer(left, right, meta)


def bimodal_calibration(reference: BinauralBuffer, ci_side: str = "left", voc: VocoderParams = VocoderParams(),
                        hl: HearingLossParams = HearingLossParams(),
                        target_db: float = REFERENCE_LEVEL_DBFS) -> tuple[float, float]:
    """Per-ear gains (dB) that bring the simulated ``reference`` to ``target_db`` in each ear."""
    y = simulate_bimodal(reference, ci_side, voc, hl)
    return target_db - rms_level_db(y.left), target_db - rms_level_db(y.right)
