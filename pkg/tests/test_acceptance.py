"""Acceptance suite: one test per criterion, each with its tolerance and time limit.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line.  Run with
``pytest tests/test_acceptance.py`` (the lines are printed even when output
capture is on) or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest
from scipy import signal

from headshadow.analysis import Chain, band_snr, ild_curve, localization_metrics
from headshadow.beamformer import BeamformerParams, comb_null_frequencies, directivity_pattern, \
    head_shadow_enhance, plane_wave
from headshadow.bimodal import VocoderParams, analysis_filters, hearing_loss_filter, vocode
from headshadow.dsp import tone
from headshadow.experiments import (CONDITIONS, LocalizationConfig, SimulatedListener, SrtConfig,
                                    localization_trials, run_adaptive_srt, run_srt_experiment)
from headshadow.signals import default_stimulus, speech_shaped_noise
from headshadow.spatial import EXPERIMENT_ANGLES, bundled_hrtf_set, condition_scenes

from conftest import FS, tone_level_db

ANGLES = list(EXPERIMENT_ANGLES)


def criterion(number: int, title: str, limit: float, capsys, body) -> None:
    """Run ``body`` (which asserts and returns a short detail string) under a time limit."""
    t0 = time.perf_counter()
    detail, error = "", None
    try:
        detail = body() or ""
    except AssertionError as e:
        error = e
    elapsed = time.perf_counter() - t0
    ok = error is None and elapsed < limit
    if error is None and not ok:
        detail += f" (time limit {limit:g} s exceeded)"
    elif error is not None:
        detail = f"{detail} {str(error).splitlines()[0] if str(error) else 'assertion failed'}".strip()
    with capsys.disabled():
        print(f"\nACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'} [{elapsed:6.1f} s, limit {limit:g} s] {title}: {detail}")
    if error is not None:
        raise error
    assert elapsed < limit, f"took {elapsed:.1f} s, limit {limit} s"


def test_01_comb_nulls(capsys):
    def body():
        nulls = comb_null_frequencies(BeamformerParams(), 2)
        assert np.allclose(nulls, [850, 1700], atol=1), nulls
        return f"nulls {nulls[0]:.1f}, {nulls[1]:.1f} Hz"
    criterion(1, "comb nulls", 1, capsys, body)


def test_02_contralateral_cancellation(capsys):
    def body():
        p = BeamformerParams()
        trim = 4096
        att = {}
        for f in (100, 300, 700, 1200):
            b = plane_wave(tone(f, 1.5, FS), -90, p)
            on = head_shadow_enhance(b, p).right.samples[trim:-trim]
            off = head_shadow_enhance(b, BeamformerParams(enabled=False)).right.samples[trim:-trim]
            att[f] = tone_level_db(off, f) - tone_level_db(on, f)
        assert min(att.values()) >= 60, att
        return "attenuation " + ", ".join(f"{f} Hz {a:.0f} dB" for f, a in att.items())
    criterion(2, "contralateral cancellation", 10, capsys, body)


def test_03_rms_identity(capsys):
    def body():
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            target = float(rng.choice(ANGLES))
            n = int(rng.integers(2, 40))
            m = localization_metrics([(target, r) for r in rng.choice(ANGLES, n)]).per_angle[target]
            worst = max(worst, abs(m.rms_error - math.sqrt((n - 1) / n * m.std ** 2 + m.bias ** 2)))
        assert worst < 1e-9, worst
        ex = localization_metrics([(15, 10), (15, 20), (15, 30)]).per_angle[15.0]
        assert abs(ex.bias - 5) < 1e-9 and abs(ex.std - 10) < 1e-9
        assert abs(ex.rms_error - math.sqrt(275 / 3)) < 1e-9 and abs(ex.rms_error - 9.574) < 5e-4
        assert abs(ex.rms_error - math.sqrt(2 / 3 * 100 + 25)) < 1e-9
        return f"max deviation {worst:.1e}; example RMS {ex.rms_error:.3f}"
    criterion(3, "RMS = sqrt((n-1)/n STD^2 + bias^2)", 5, capsys, body)


def test_04_hearing_loss_filter(capsys):
    def body():
        def gain(f):
            x = tone(f, 2.0, FS)
            return tone_level_db(hearing_loss_filter(x).samples[FS // 2:], f) - tone_level_db(x.samples[FS // 2:], f)
        g500 = gain(500)
        slope = gain(2000) - gain(1000)
        assert abs(g500 + 3.01) <= 0.1, g500
        assert abs(slope + 36) <= 2, slope
        return f"500 Hz {g500:.3f} dB, 1-2 kHz slope {slope:.2f} dB/oct"
    criterion(4, "hearing-loss filter", 5, capsys, body)


def test_05_vocoder_long_term_spectrum(capsys):
    def body():
        x = speech_shaped_noise(10.0, 5)
        worst = {}
        for n in (5, 8):
            p = VocoderParams(n_channels=n)
            y = vocode(x, p)
            d = []
            for f in analysis_filters(p, FS):
                sos = np.array(f.sos)
                d.append(10 * np.log10(np.mean(signal.sosfilt(sos, y.samples) ** 2)
                                       / np.mean(signal.sosfilt(sos, x.samples) ** 2)))
            worst[n] = float(np.max(np.abs(d)))
        assert max(worst.values()) <= 1, worst
        return f"max channel deviation 5 ch {worst[5]:.2f} dB, 8 ch {worst[8]:.2f} dB"
    criterion(5, "vocoder long-term spectrum", 30, capsys, body)


def test_06_directivity(capsys):
    def body():
        p = BeamformerParams()
        hrtfs = bundled_hrtf_set()
        order = list(range(90, -91, -15))  # ipsilateral (right ear) to contralateral
        low_ff = directivity_pattern(p, (100, 1500), order, "freefield", ear="right")
        low_hr = directivity_pattern(p, (100, 1500), order, hrtfs, ear="right")
        for d in (low_ff, low_hr):
            assert np.all(np.diff([d[a] for a in order]) < 0), d
        hi_on = directivity_pattern(p, (1500, 20000), order, hrtfs, ear="right")
        hi_off = directivity_pattern(p, (1500, 20000), order, hrtfs, ear="right", processed=False)
        dev = max(abs(hi_on[a] - hi_off[a]) for a in order)
        assert dev <= 1, dev
        return (f"low band {low_hr[90]:.1f} -> {low_hr[-90]:.1f} dB (HRTF), "
                f"{low_ff[90]:.1f} -> {low_ff[-90]:.1f} dB (free field); high band max change {dev:.2g} dB")
    criterion(6, "low-band cardioid, high band unchanged", 60, capsys, body)


def test_07_ild_curves(capsys):
    def body():
        x = default_stimulus()
        parts = []
        for bright in (True, False):
            hrtfs = bundled_hrtf_set(bright_spot=bright)
            nat = ild_curve(x, hrtfs, Chain().calibrated(hrtfs, x))
            enh = ild_curve(x, hrtfs, Chain(enhanced=True).calibrated(hrtfs, x))
            assert enh.is_strictly_monotonic(), enh.ild
            assert enh.range > nat.range, (enh.range, nat.range)
            parts.append(f"bright spot {'on' if bright else 'off'}: range {nat.range:.1f} -> {enh.range:.1f} dB")
        return "; ".join(parts)
    criterion(7, "enhanced ILD monotonic and steeper", 60, capsys, body)


def _oracle_rms(template: np.ndarray, sigma: float, draws: int, seed: int) -> float:
    """Independent Monte Carlo: observed ILD = template ILD of the target + N(0, sigma)."""
    rng = np.random.default_rng(seed)
    ang = np.asarray(ANGLES, dtype=float)
    # candidates in tie-break priority order, so argmin's first hit is the rule's choice
    prio = np.array(sorted(range(len(ang)), key=lambda i: (abs(ang[i]), ang[i])))
    rms = []
    for i, target in enumerate(ang):
        obs = template[i] + sigma * rng.standard_normal(draws)
        resp = ang[prio][np.argmin(np.abs(obs[:, None] - template[prio][None, :]), axis=1)]
        rms.append(np.sqrt(np.mean((resp - target) ** 2)))
    return float(np.mean(rms))


def test_08_localization(capsys):
    def body():
        hrtfs = bundled_hrtf_set(bright_spot=True)
        res = {}
        for proc in ("natural", "enhanced"):
            cfg = LocalizationConfig(trials_per_angle=100, ild_noise_sigma=1.0, processing=proc, seed=2024)
            template, trials = localization_trials(cfg, hrtfs)
            got = localization_metrics((t.target, t.response) for t in trials).mean_rms
            res[proc] = (got, _oracle_rms(np.asarray(template.ild), 1.0, 100_000, 77))
        for proc, (got, oracle) in res.items():
            assert abs(got - oracle) <= 0.1 * oracle, (proc, got, oracle)
        assert res["enhanced"][0] < res["natural"][0], res
        return ", ".join(f"{p} {g:.1f} deg (oracle {o:.1f})" for p, (g, o) in res.items())
    criterion(8, "ideal-observer localization", 120, capsys, body)


def test_09_band_snr(capsys):
    def body():
        hrtfs = bundled_hrtf_set()
        sp = speech_shaped_noise(2.0, 1)
        out = {}
        for cond in ("S0NCI", "S0N360"):
            s, n = condition_scenes(cond, sp, lambda k: speech_shaped_noise(2.0, 1000 + k))
            nat = band_snr(s, n, hrtfs, Chain())
            enh = band_snr(s, n, hrtfs, Chain(enhanced=True))
            out[cond] = {e: enh.mean_below(e) - nat.mean_below(e) for e in ("left", "right")}
        ci = out["S0NCI"]
        assert ci["right"] > 6, ci
        assert abs(ci["left"]) <= 3, ci
        assert all(abs(v) <= 2 for v in out["S0N360"].values()), out["S0N360"]
        return (f"S0NCI HA ear +{ci['right']:.1f} dB, CI ear {ci['left']:+.1f} dB; "
                f"S0N360 {out['S0N360']['left']:+.2f}/{out['S0N360']['right']:+.2f} dB")
    criterion(9, "band SNR gains", 120, capsys, body)


def test_10_srt(capsys):
    def body():
        res = run_srt_experiment(SrtConfig(n_runs=200, seed=0))
        imp = {c: res.improvement(c) for c in CONDITIONS}
        assert imp["S0NCI"] > imp["S0NHA"] > abs(imp["S0N360"]), imp
        assert abs(imp["S0N360"]) < 1.5, imp
        bias = {}
        for slope in (0.1, 0.15, 0.2, 0.25):
            lis = SimulatedListener(srt50=-6.0, slope=slope)
            srts = [run_adaptive_srt(lis, rng=np.random.default_rng([10, i])) for i in range(200)]
            bias[slope] = float(np.mean(srts) - lis.srt50)
        assert max(abs(b) for b in bias.values()) < 1, bias
        return (", ".join(f"{c} {v:+.1f} dB" for c, v in imp.items())
                + f"; max track bias {max(abs(b) for b in bias.values()):.2f} dB")
    criterion(10, "SRT improvement ordering", 300, capsys, body)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
