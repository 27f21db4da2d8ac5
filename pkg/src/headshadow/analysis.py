"""ILD curves, per-band SNRs and localization error measures.

ILD convention everywhere: right-ear level minus left-ear level (dB), so a
source on the right gives a positive ILD.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .beamformer import BeamformerParams, head_shadow_enhance
from .bimodal import HearingLossParams, VocoderParams, bimodal_calibration, simulate_bimodal
from .dsp import REFERENCE_LEVEL_DBFS, BinauralBuffer, SampleBuffer, band_powers, rms_level_db
from .errors import ParameterError
from .signals import speech_shaped_noise
from .spatial import EXPERIMENT_ANGLES, HrtfSet, Scene, render_scene, render_source

THIRD_OCTAVE_CENTERS = (125, 160, 200, 250, 315, 400, 500, 630, 800, 1000, 1250,
                        1600, 2000, 2500, 3150, 4000, 5000, 6300, 8000)


def third_octave_edges(centers: Sequence[float] = THIRD_OCTAVE_CENTERS) -> list[float]:
    c = np.asarray(centers, dtype=float)
    return list(np.concatenate([c * 2 ** (-1 / 6), c[-1:] * 2 ** (1 / 6)]))


@dataclass(frozen=True)
class Chain:
    """Processing applied to a binaural render: optional enhancement, then optional bimodal simulation.

    ``ear_gains_db`` are the per-ear presentation gains (left, right) applied
    at the very end; :meth:`calibrated` fills them in.
    """

    enhanced: bool = False
    beamformer: BeamformerParams = BeamformerParams()
    bimodal: bool = True
    ci_side: str = "left"
    vocoder: VocoderParams = VocoderParams()
    hearing_loss: HearingLossParams = HearingLossParams()
    ear_gains_db: tuple[float, float] = (0.0, 0.0)

    @property
    def label(self) -> str:
        return "enhanced" if self.enhanced else "natural"

    def front_end(self, x: BinauralBuffer) -> BinauralBuffer:
        """The linear part of the chain (beamformer or pass-through)."""
        if self.enhanced:
            return head_shadow_enhance(x, replace(self.beamformer, enabled=True))
        return x

    def process(self, x: BinauralBuffer, vocoder_seed: int | None = None) -> BinauralBuffer:
        y = self.front_end(x)
        if self.bimodal:
            voc = self.vocoder if vocoder_seed is None else replace(self.vocoder, seed=vocoder_seed)
            return simulate_bimodal(y, self.ci_side, voc, self.hearing_loss, self.ear_gains_db)
        gl, gr = self.ear_gains_db
        return BinauralBuffer(y.left.scaled(10 ** (gl / 20)), y.right.scaled(10 ** (gr / 20)), dict(y.metadata))

    def calibrated(self, hrtfs: HrtfSet, reference: SampleBuffer | None = None,
                   target_db: float = REFERENCE_LEVEL_DBFS) -> Chain:
        """Copy of this chain whose gains put a frontal ``reference`` at ``target_db`` in each ear.

        The default reference is 2 s of speech-shaped noise (seed 12345).
        """
        if reference is None:
            reference = speech_shaped_noise(2.0, 12345, hrtfs.sample_rate)
        y = self.front_end(render_source(reference, 0, hrtfs))
        if self.bimodal:
            gains = bimodal_calibration(y, self.ci_side, self.vocoder, self.hearing_loss, target_db)
        else:
            gains = (target_db - rms_level_db(y.left), target_db - rms_level_db(y.right))
        return replace(self, ear_gains_db=tuple(float(g) for g in gains))


def broadband_ild(x: BinauralBuffer) -> float:
    """Right-ear RMS level minus left-ear RMS level (dB).

    A silent ear yields +/-inf (or nan when both are silent) and a warning.
    """
    left, right = rms_level_db(x.left), rms_level_db(x.right)
    if math.isinf(left) or math.isinf(right):
        warnings.warn("broadband_ild: silent channel", RuntimeWarning, stacklevel=2)
        if math.isinf(left) and math.isinf(right):
            return float("nan")
    return right - left


@dataclass
class IldCurve:
    angles: list[int]
    ild: list[float]
    processing: str
    stimulus: str = "speech-shaped noise"

    def is_strictly_monotonic(self) -> bool:
        d = np.diff(self.ild)
        return bool(np.all(d > 0) or np.all(d < 0))

    @property
    def range(self) -> float:
        return float(max(self.ild) - min(self.ild))

    def ild_at(self, angle: int) -> float:
        return self.ild[self.angles.index(angle)]


def ild_curve(stimulus: SampleBuffer, hrtfs: HrtfSet, chain: Chain,
              angles: Iterable[int] = EXPERIMENT_ANGLES, stimulus_label: str = "speech-shaped noise",
              pre_simulation: bool = False) -> IldCurve:
    """Broadband ILD of ``stimulus`` rendered at each angle and passed through ``chain``.

    With ``pre_simulation`` the ILD is taken after the front end only,
    before the vocoder/low-pass.
    """
    angles = [int(a) for a in angles]
    values = []
    for az in angles:
        b = render_source(stimulus, az, hrtfs)
        y = chain.front_end(b) if pre_simulation else chain.process(b)
        values.append(broadband_ild(y))
    return IldCurve(angles, values, chain.label, stimulus_label)


@dataclass
class BandSnrReport:
    band_centers: list[float]
    snr_left: list[float]
    snr_right: list[float]
    condition: str
    processing: str

    def snr(self, ear: str) -> list[float]:
        if ear == "left":
            return self.snr_left
        if ear == "right":
            return self.snr_right
        raise ParameterError(f"ear must be 'left' or 'right', got {ear!r}")

    def mean_below(self, ear: str, limit: float = 1500.0) -> float:
        """Mean SNR over the bands whose centre lies below ``limit`` Hz."""
        v = [s for c, s in zip(self.band_centers, self.snr(ear)) if c < limit]
        return float(np.mean(v))


def band_snr(speech_scene: Scene, noise_scene: Scene, hrtfs: HrtfSet, chain: Chain,
             bands: Sequence[float] | None = None, condition: str = "") -> BandSnrReport:
    """Per-ear, per-band SNR measured after the chain's front end.

    Speech and noise are rendered and processed separately through the same
    (linear) front end, so the SNR is an exact band-power difference.  The
    vocoder and hearing-loss stages are not included.
    """
    if not speech_scene.sources or not noise_scene.sources:
        raise ParameterError("band_snr needs non-empty speech and noise scenes")
    if speech_scene.sample_rate != noise_scene.sample_rate:
        raise ParameterError("speech and noise scenes have different sample rates")
    edges = list(bands) if bands is not None else third_octave_edges()
    centers = [math.sqrt(lo * hi) for lo, hi in zip(edges[:-1], edges[1:])]
    if bands is None:
        centers = [float(c) for c in THIRD_OCTAVE_CENTERS]
    s = chain.front_end(render_scene(speech_scene, hrtfs))
    n = chain.front_end(render_scene(noise_scene, hrtfs))
    snr = {}
    for ear in ("left", "right"):
        ps = band_powers(s.ear(ear), edges)
        pn = band_powers(n.ear(ear), edges)
        snr[ear] = [a - b for a, b in zip(ps, pn)]
    cond = condition or noise_scene.description.split(":")[0]
    return BandSnrReport(centers, snr["left"], snr["right"], cond, chain.label)


@dataclass
class AngleMetrics:
    target: float
    n_trials: int
    mean_response: float
    bias: float
    std: float  # nan when only one trial
    rms_error: float


@dataclass
class LocalizationMetrics:
    per_angle: dict[float, AngleMetrics] = field(default_factory=dict)

    @property
    def mean_rms(self) -> float:
        return float(np.mean([m.rms_error for m in self.per_angle.values()]))

    @property
    def angles(self) -> list[float]:
        return sorted(self.per_angle)


def localization_metrics(trials: Iterable[tuple[float, float]]) -> LocalizationMetrics:
    """Bias, response STD and RMS error per target angle.

    bias = |mean response - target|; STD uses an ``n - 1`` denominator; RMS
    error uses ``n``.  With a single trial at an angle the STD is ``nan``.
    """
    by_target: dict[float, list[float]] = defaultdict(list)
    for target, response in trials:
        by_target[float(target)].append(float(response))
    if not by_target:
        raise ParameterError("no trials")
    out = LocalizationMetrics()
    for target in sorted(by_target):
        r = np.asarray(by_target[target])
        mean = float(r.mean())
        std = float(np.sqrt(np.sum((r - mean) ** 2) / (r.size - 1))) if r.size > 1 else float("nan")
        rms = float(np.sqrt(np.mean((r - target) ** 2)))
        out.per_angle[target] = AngleMetrics(target, int(r.size), mean, abs(mean - target), std, rms)
    return out


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "-inf" if v < 0 else "inf"
        return repr(round(float(v), 10))
    return str(v)


def _csv(header: list[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


#: CSV schemas (column order is stable).
ILD_COLUMNS = ["angle_deg", "processing", "stimulus", "ild_db"]
SNR_COLUMNS = ["condition", "processing", "band_center_hz", "snr_left_db", "snr_right_db"]
LOCALIZATION_COLUMNS = ["processing", "target_deg", "n_trials", "mean_response_deg", "bias_deg",
                        "std_deg", "rms_error_deg"]


def ild_curves_csv(curves: Iterable[IldCurve]) -> str:
    return _csv(ILD_COLUMNS, ([a, c.processing, c.stimulus, v] for c in curves for a, v in zip(c.angles, c.ild)))


def band_snr_csv(reports: Iterable[BandSnrReport]) -> str:
    return _csv(SNR_COLUMNS, ([r.condition, r.processing, c, sl, sr]
                              for r in reports for c, sl, sr in zip(r.band_centers, r.snr_left, r.snr_right)))


def localization_csv(metrics: dict[str, LocalizationMetrics]) -> str:
    return _csv(LOCALIZATION_COLUMNS, ([label, m.target, m.n_trials, m.mean_response, m.bias, m.std, m.rms_error]
                                       for label, lm in metrics.items() for m in lm.per_angle.values()))


def to_json(obj) -> str:
    """JSON for report dataclasses; non-finite floats become strings."""
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return _fmt(v)
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    return json.dumps(clean(obj), indent=2, sort_keys=True)
