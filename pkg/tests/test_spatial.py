import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal
from scipy.io import wavfile

from headshadow.analysis import broadband_ild
from headshadow.dsp import BinauralBuffer, FirFilter, SampleBuffer, rms_level_db, white_noise
from headshadow.errors import DataError, ParameterError
from headshadow.signals import speech_shaped_noise
from headshadow.spatial import (EXPERIMENT_ANGLES, MATCHED_HEAD_RADIUS, HrtfSet, Scene, Source,
                                SphericalHeadModel, condition_scenes, ear_delay, ear_incidence, load_hrtf_set,
                                render_scene, render_source, save_hrtf_set, shadow_gain, synth_spherical_hrtf,
                                synthetic_hrtf_set, truncate_hrtf_set, truncate_ir)

from conftest import FS


def lf_delay(ir: np.ndarray, fs: int = FS, f: float = 10.0) -> float:
    """Group delay (s) of an IR near DC from its phase slope."""
    w = 2 * np.pi * np.array([f - 1.0, f + 1.0]) / fs
    _, h = signal.freqz(ir, worN=w)
    ph = np.unwrap(np.angle(h))
    return -(ph[1] - ph[0]) / (w[1] - w[0]) / fs


def xcorr_lag(a: np.ndarray, b: np.ndarray, fs: int = FS) -> float:
    """Lag (s) of b relative to a at the cross-correlation peak, with parabolic refinement."""
    c = signal.correlate(b, a, mode="full")
    k = int(np.argmax(c))
    y0, y1, y2 = c[k - 1], c[k], c[k + 1]
    frac = 0.5 * (y0 - y2) / (y0 - 2 * y1 + y2)
    return (k + frac - (len(a) - 1)) / fs


# --------------------------------------------------------------------- synthesis

def test_zero_azimuth_symmetric():
    left, right = synth_spherical_hrtf(0, FS)
    assert np.array_equal(left.taps, right.taps)


def test_woodworth_itd_at_90_for_standard_head():
    a, c = 0.0875, 340.0
    left, right = synth_spherical_hrtf(90, FS, head_radius=a, speed_of_sound=c)
    expected = a / c * (1 + np.pi / 2)
    assert expected == pytest.approx(661e-6, abs=1e-6)
    # low-frequency delay, where the shadow shelf is flat
    itd = lf_delay(left.taps) - lf_delay(right.taps)
    assert itd == pytest.approx(expected, abs=1 / FS)
    # and the same via cross-correlation of low-passed noise renders
    noise = white_noise(1.0, 4)
    sos = signal.butter(4, 100, fs=FS, output="sos")
    y = render_source(noise, 90, synthetic_hrtf_set([90], FS, SphericalHeadModel(head_radius=a)))
    lag = xcorr_lag(signal.sosfilt(sos, y.right.samples), signal.sosfilt(sos, y.left.samples))
    assert lag == pytest.approx(expected, abs=1 / FS)


@pytest.mark.parametrize("az", [15, 30, 45, 60, 75, 90])
def test_itd_follows_woodworth_at_all_angles(az):
    m = SphericalHeadModel()
    left, right = synth_spherical_hrtf(az, FS, model=m)
    th = np.radians(az)
    expected = m.head_radius / m.speed_of_sound * (np.sin(th) + th)
    assert lf_delay(left.taps) - lf_delay(right.taps) == pytest.approx(expected, abs=2e-6)


def test_matched_radius_gives_20cm_path():
    assert MATCHED_HEAD_RADIUS * (1 + np.pi / 2) == pytest.approx(0.2)
    assert SphericalHeadModel().head_radius == MATCHED_HEAD_RADIUS


def test_positive_ild_at_plus_90():
    y = render_source(white_noise(0.5, 1), 90, synthetic_hrtf_set([90]))
    assert broadband_ild(y) > 0


def test_shadow_gain_range():
    m = SphericalHeadModel()
    assert shadow_gain(0, m) == pytest.approx(2.0)  # +6 dB facing the source
    assert 20 * np.log10(shadow_gain(180, m)) <= -6
    vals = [shadow_gain(p, m) for p in range(0, 181, 5)]
    assert np.all(np.diff(vals) < 0)


def test_shelf_has_unity_dc_and_alpha_at_nyquist():
    m = SphericalHeadModel(min_shadow_gain=0.1)
    for psi in (0, 60, 120, 180):
        ir, _ = synth_spherical_hrtf(-90 + psi if psi < 180 else -180, FS, model=m)
        assert abs(ir.taps.sum() - 1) < 1e-6
    # high-frequency gain of the far ear is well below the near ear
    left, right = synth_spherical_hrtf(90, FS, model=m)
    _, hl = signal.freqz(left.taps, worN=[2 * np.pi * 15000 / FS])
    _, hr = signal.freqz(right.taps, worN=[2 * np.pi * 15000 / FS])
    assert 20 * np.log10(abs(hr[0]) / abs(hl[0])) > 12


def test_bright_spot_raises_far_ear_high_frequencies():
    plain = SphericalHeadModel()
    bright = SphericalHeadModel(bright_spot=True)
    assert shadow_gain(180, bright) > shadow_gain(180, plain)
    assert shadow_gain(160, bright) == shadow_gain(160, plain)


def test_azimuth_out_of_range():
    with pytest.raises(ParameterError):
        synth_spherical_hrtf(180, FS)
    with pytest.raises(ParameterError):
        SphericalHeadModel(head_radius=0)


def test_ear_incidence_and_delay():
    assert ear_incidence(90, "right") == 0
    assert ear_incidence(90, "left") == 180
    assert ear_incidence(-180, "right") == 90
    m = SphericalHeadModel()
    assert ear_delay(0, m) == 0
    assert ear_delay(180, m) - ear_delay(0, m) == pytest.approx(0.2 / 340)


def test_synthetic_set_mirror_symmetry(hrtfs):
    for az in hrtfs.angles:
        if az == -180:
            continue
        left, _ = hrtfs.pair(az)
        _, right = hrtfs.pair(-az)
        assert np.array_equal(left.taps, right.taps)


@pytest.mark.parametrize("az", [0, 15, 45, 90, 135])
def test_render_swap_equals_mirror(hrtfs, az):
    x = white_noise(0.2, 7)
    a = render_source(x, az, hrtfs).swapped()
    b = render_source(x, -az, hrtfs)
    assert np.max(np.abs(a.as_array() - b.as_array())) < 1e-9


def test_natural_ild_increases_from_0_to_60(hrtfs):
    x = white_noise(1.0, 2)
    ild = [broadband_ild(render_source(x, az, hrtfs)) for az in range(0, 61, 15)]
    assert np.all(np.diff(ild) > 0)


# --------------------------------------------------------------------- truncation

def test_truncate_impulse_at_10():
    taps = np.zeros(400)
    taps[10] = 1.0
    out = truncate_ir(FirFilter(taps, FS))
    assert len(out) == 10 + 88 + 1
    assert np.array_equal(out.taps, taps[:99])


def test_truncate_short_ir_unchanged():
    ir = FirFilter(np.r_[0.0, 1.0, 0.5, 0.25], FS)
    assert truncate_ir(ir) is ir


def test_truncate_removes_late_reflection():
    rng = np.random.default_rng(0)
    direct = np.zeros(600)
    peak = 20
    direct[peak: peak + 30] = np.exp(-np.arange(30) / 4.0) * (1 + 0.1 * rng.standard_normal(30))
    ir = direct.copy()
    echo = peak + int(round(0.005 * FS))
    ir[echo] = 0.5
    out = truncate_ir(FirFilter(ir, FS)).taps
    assert len(out) < echo
    assert np.sum(out ** 2) / np.sum(direct ** 2) >= 0.999


def test_truncate_all_zero_is_error():
    with pytest.raises(DataError):
        truncate_ir(FirFilter(np.zeros(10), FS))


def test_truncate_set_flags(hrtfs_small):
    t = truncate_hrtf_set(hrtfs_small)
    assert t.truncated and t.angles == hrtfs_small.angles
    assert t.max_ir_length <= hrtfs_small.max_ir_length


# --------------------------------------------------------------------- import

def _write_set(root, angles, fs=FS, skip=(), dtype=np.float32, rate_override=None):
    root.mkdir(exist_ok=True)
    for az in angles:
        for ear in "LR":
            if (az, ear) in skip:
                continue
            ir = np.zeros(32, dtype=np.float64)
            ir[3] = 0.5 if ear == "L" else 0.25
            data = (ir * 32767).astype(np.int16) if dtype == np.int16 else ir.astype(dtype)
            wavfile.write(root / f"az{az:+d}_{ear}.wav", rate_override.get((az, ear), fs)
                          if rate_override else fs, data)


def test_load_happy_path(tmp_path):
    _write_set(tmp_path / "h", EXPERIMENT_ANGLES)
    h = load_hrtf_set(tmp_path / "h")
    assert len(h.angles) == 13 and h.sample_rate == FS and h.source == "imported"
    assert h.pair(45)[0].taps[3] == pytest.approx(0.5)


def test_load_int16_scaling(tmp_path):
    _write_set(tmp_path / "h", EXPERIMENT_ANGLES, dtype=np.int16)
    h = load_hrtf_set(tmp_path / "h")
    assert h.pair(0)[0].taps[3] == pytest.approx(16383 / 32768)


def test_load_missing_ear_named(tmp_path):
    _write_set(tmp_path / "h", EXPERIMENT_ANGLES, skip={(45, "L")})
    with pytest.raises(DataError, match=r"\+45/left"):
        load_hrtf_set(tmp_path / "h")


def test_load_missing_angle_named(tmp_path):
    _write_set(tmp_path / "h", [a for a in EXPERIMENT_ANGLES if a != -30])
    with pytest.raises(DataError, match=r"-30/left, -30/right"):
        load_hrtf_set(tmp_path / "h")


def test_load_mixed_rates(tmp_path):
    _write_set(tmp_path / "h", EXPERIMENT_ANGLES, rate_override={(30, "R"): 48000})
    with pytest.raises(DataError, match="sample-rate mismatch"):
        load_hrtf_set(tmp_path / "h")


def test_load_raw_float_with_manifest(tmp_path):
    root = tmp_path / "raw"
    root.mkdir()
    for ear in "LR":
        np.arange(8, dtype="<f4").tofile(root / f"az+0_{ear}.f32")
    (root / "manifest.json").write_text(json.dumps({"sample_rate": 16000, "angles": [0]}))
    h = load_hrtf_set(root)
    assert h.sample_rate == 16000 and h.angles == [0]
    (root / "manifest.json").unlink()
    with pytest.raises(DataError):
        load_hrtf_set(root, required_angles=[0])


def test_load_missing_directory(tmp_path):
    with pytest.raises(DataError):
        load_hrtf_set(tmp_path / "nope")
    (tmp_path / "empty").mkdir()
    with pytest.raises(DataError):
        load_hrtf_set(tmp_path / "empty", required_angles=())


def test_save_load_round_trip(tmp_path, hrtfs_small):
    save_hrtf_set(hrtfs_small, tmp_path / "s")
    h = load_hrtf_set(tmp_path / "s")
    assert h.angles == hrtfs_small.angles
    for az in h.angles:
        for a, b in zip(h.pair(az), hrtfs_small.pair(az)):
            assert np.max(np.abs(a.taps - b.taps)) < 1e-6


def test_hrtf_set_rate_check():
    with pytest.raises(DataError):
        HrtfSet({0: (FirFilter([1.0], 16000), FirFilter([1.0], FS))}, FS)


# --------------------------------------------------------------------- rendering

def test_render_zero_degrees_channels_equal(hrtfs):
    y = render_source(white_noise(0.3, 5), 0, hrtfs)
    assert np.max(np.abs(y.left.samples - y.right.samples)) < 1e-9


def test_render_linearity_and_length(hrtfs):
    a, b = white_noise(0.2, 1), white_noise(0.3, 2)
    both = render_scene(Scene([Source(30, a), Source(-60, b, -3.0)]), hrtfs)
    single = [render_scene(Scene([s]), hrtfs) for s in (Source(30, a), Source(-60, b, -3.0))]
    assert len(both) == len(b) + hrtfs.max_ir_length - 1
    for ear in ("left", "right"):
        ref = np.zeros(len(both))
        for s in single:
            ref[: len(s)] += s.ear(ear).samples
        assert np.max(np.abs(both.ear(ear).samples - ref)) < 1e-9


def test_render_level_offset(hrtfs):
    x = white_noise(0.2, 1)
    a = render_source(x, 45, hrtfs)
    b = render_source(x, 45, hrtfs, level_offset=-6.0)
    assert rms_level_db(a.left) - rms_level_db(b.left) == pytest.approx(6.0, abs=1e-9)


@given(perm=st.permutations(range(4)))
@settings(max_examples=10, deadline=None)
def test_render_permutation_invariant(perm):
    from headshadow.spatial import bundled_hrtf_set
    h = bundled_hrtf_set()
    srcs = [Source(az, white_noise(0.05, i)) for i, az in enumerate((0, 30, -45, 120))]
    a = render_scene(Scene(srcs), h)
    b = render_scene(Scene([srcs[i] for i in perm]), h)
    pa, pb = np.sum(a.as_array() ** 2), np.sum(b.as_array() ** 2)
    assert abs(pa - pb) <= 1e-12 * pa


def test_render_missing_angle_named(hrtfs_small):
    with pytest.raises(ParameterError, match=r"\+100"):
        render_source(white_noise(0.01, 0), 100, hrtfs_small)
    with pytest.raises(ParameterError):
        render_scene(Scene([]), hrtfs_small)


def test_scene_mixed_rates():
    with pytest.raises(ParameterError):
        Scene([Source(0, SampleBuffer(np.zeros(3), 16000)), Source(0, SampleBuffer(np.zeros(3), FS))])


def test_condition_scenes():
    sp = speech_shaped_noise(0.1, 0)
    s, n = condition_scenes("S0NCI", sp, lambda k: speech_shaped_noise(0.1, k))
    assert [x.azimuth for x in s.sources] == [0] and [x.azimuth for x in n.sources] == [-90]
    _, n = condition_scenes("S0NHA", sp, lambda k: speech_shaped_noise(0.1, k))
    assert [x.azimuth for x in n.sources] == [90]
    _, n = condition_scenes("S0NCI", sp, lambda k: speech_shaped_noise(0.1, k), ci_side="right")
    assert [x.azimuth for x in n.sources] == [90]
    _, n = condition_scenes("S0N360", sp, lambda k: speech_shaped_noise(0.1, k))
    assert sorted(x.azimuth for x in n.sources) == list(range(-180, 180, 15))
    assert all(x.level_offset == pytest.approx(-10 * np.log10(24)) for x in n.sources)
    with pytest.raises(ParameterError):
        condition_scenes("S0N90", sp, lambda k: sp)


def test_surround_noise_power_matches_single_frontal_source(hrtfs):
    def noise(k):
        return speech_shaped_noise(3.0, 100 + k)
    _, surround = condition_scenes("S0N360", noise(99), noise)
    diffuse = render_scene(surround, hrtfs)
    front = render_source(noise(50), 0, hrtfs)
    for ear in ("left", "right"):
        assert rms_level_db(diffuse.ear(ear)) - rms_level_db(front.ear(ear)) == pytest.approx(0, abs=1.0)


def test_binaural_ild_sign_convention(hrtfs):
    y = render_source(white_noise(0.3, 0), -90, hrtfs)
    assert broadband_ild(y) < 0
    assert broadband_ild(BinauralBuffer(y.right, y.left)) == -broadband_ild(y)
