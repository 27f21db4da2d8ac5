"""Command-line interface.

Every command takes ``--config PATH`` (JSON object whose keys override the
command defaults), ``--seed``, ``--out DIR``, ``--jobs`` and
``--no-timestamp``.  Command-line flags override the config file.  The
defaults of the analysis commands are the recipes of the corresponding
figures; ``--preset`` selects a named recipe explicitly.

Exit codes: 0 success, 1 runtime or data error, 2 configuration or
validation error.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import (Chain, band_snr, band_snr_csv, ild_curve, ild_curves_csv, localization_csv,
                       localization_metrics, to_json, _csv)
from .beamformer import BeamformerParams, directivity_pattern, head_shadow_enhance
from .bimodal import HearingLossParams, VocoderParams, vocode
from .dsp import BinauralBuffer, DEFAULT_SAMPLE_RATE, SampleBuffer, tone, white_noise
from .errors import DataError, HeadShadowError, ParameterError
from .experiments import (CONDITIONS, PROCESSINGS, SRT_COLUMNS, AdaptiveTrack, LocalizationConfig,
                          SimulatedListener, SrtConfig, effective_snr, localization_trials, run_srt_experiment)
from .io import load_json, read_mono, read_stereo, read_wav, write_wav
from .signals import default_stimulus, raised_cosine_ramp, speech_shaped_noise
from .spatial import (EXPERIMENT_ANGLES, HrtfSet, Scene, Source, bundled_hrtf_set, condition_scenes,
                      load_hrtf_set, render_scene)

STAGE_ORDER = ("spatialize", "enhance", "bimodal")

# Command defaults.  These double as the figure recipes listed in PRESETS.
DEFAULTS = {
    "render": {"sources": [{"azimuth": 0, "signal": {"type": "speech_noise", "duration": 2.0}}],
               "condition": None, "stages": ["spatialize"], "ci_side": "left", "n_surround": 24,
               "sample_rate": DEFAULT_SAMPLE_RATE, "hrtf": None, "beamformer": {}, "vocoder": {},
               "calibrate": True},
    "enhance": {"beamformer": {}},
    "vocode": {"vocoder": {}},
    "bimodal": {"ci_side": "left", "vocoder": {}, "hearing_loss": {}, "enhance": False, "beamformer": {},
                "calibrate": False, "hrtf": None},
    "directivity": {"mode": "hrtf", "bands": [[100.0, 1500.0], [1500.0, 20000.0]], "ear": "right",
                    "angles": list(range(-180, 180, 15)), "duration": 2.0, "beamformer": {}, "hrtf": None},
    "ild-curve": {"processings": list(PROCESSINGS), "stimulus_seed": 0, "pre_simulation": False,
                  "ci_side": "left", "vocoder": {}, "bright_spot": True, "hrtf": None},
    "snr": {"conditions": list(CONDITIONS), "speech_seed": 1, "token_duration": 2.0, "n_surround": 24,
            "ci_side": "left", "clip_db": None, "hrtf": None},
    "localize": {"processings": list(PROCESSINGS), "trials_per_angle": 9, "rove_range": 10.0,
                 "ild_noise_sigma": 1.0, "stimulus_seed": 0, "bright_spot": True, "hrtf": None},
    "srt": {"conditions": list(CONDITIONS), "n_runs": 200, "srt50": -6.0, "slope": 0.15, "start_snr": 0.0,
            "steps": [5.0, 5.0, 3.0, 3.0, 2.0, 2.0, 1.0], "n_sentences": 20, "speech_seed": 1,
            "token_duration": 2.0, "n_surround": 24, "ci_side": "left", "clip_db": None, "hrtf": None},
}

PRESETS = {
    "fig1b": ("directivity", {}),
    "fig2a": ("ild-curve", {}),
    "fig2b": ("localize", {}),
    "fig2c": ("localize", {}),
    "fig3a": ("snr", {}),
    "fig3b": ("srt", {}),
    "S0NCI": ("render", {"condition": "S0NCI"}),
    "S0NHA": ("render", {"condition": "S0NHA"}),
    "S0N360": ("render", {"condition": "S0N360"}),
}


# --------------------------------------------------------------------- helpers

def _merge(base: dict, update: dict, where: str = "config") -> dict:
    out = copy.deepcopy(base)
    for k, v in update.items():
        if k not in base:
            raise ParameterError(f"{where}: unknown key {k!r}")
        if isinstance(base[k], dict) and base[k] and isinstance(v, dict):
            out[k] = _merge(base[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def _resolve(args, overrides: dict) -> dict:
    cfg = DEFAULTS[args.command]
    if args.preset:
        if args.preset not in PRESETS:
            raise ParameterError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        command, preset = PRESETS[args.preset]
        if command != args.command:
            raise ParameterError(f"preset {args.preset!r} belongs to the {command!r} command")
        cfg = _merge(cfg, preset)
    if args.config:
        cfg = _merge(cfg, load_json(args.config))
    return _merge(cfg, {k: v for k, v in overrides.items() if v is not None}, "option")


def _dataclass_from(cls, block: dict, where: str, **extra):
    try:
        return cls(**block, **extra)
    except TypeError as e:
        raise ParameterError(f"{where}: {e}") from None


def _hrtfs(path, sample_rate: int = DEFAULT_SAMPLE_RATE, bright_spot: bool = False) -> HrtfSet:
    if path is None:
        return bundled_hrtf_set(sample_rate, bool(bright_spot))
    return load_hrtf_set(path, required_angles=())


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    print(path)


def _report(args, cfg: dict, results) -> str:
    meta = {"command": args.command, "version": __version__, "seed": args.seed or 0, "config": cfg}
    if not args.no_timestamp:
        meta["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return to_json({"metadata": meta, "results": results}) + "\n"


def _signal(spec: dict, seed: int, sample_rate: int) -> SampleBuffer:
    spec = dict(spec)
    if "file" in spec:
        x = read_mono(spec.pop("file"))
        if x.sample_rate != sample_rate:
            raise ParameterError(f"signal file is {x.sample_rate} Hz, scene is {sample_rate} Hz")
        return x
    kind = spec.pop("type", "speech_noise")
    duration = float(spec.pop("duration", 2.0))
    seed = int(spec.pop("seed", seed))
    level = float(spec.pop("level_db", -25.0))
    if kind == "speech_noise":
        x = speech_shaped_noise(duration, seed, sample_rate, level)
    elif kind == "white_noise":
        x = white_noise(duration, seed, sample_rate, level)
    elif kind == "tone":
        # RMS level to peak amplitude
        x = tone(float(spec.pop("frequency", 1000.0)), duration, sample_rate, 10 ** (level / 20) * 2 ** 0.5)
    elif kind == "word":
        x = default_stimulus(seed, sample_rate, duration)
    else:
        raise ParameterError(f"unknown signal type {kind!r}")
    ramp = spec.pop("ramp", None)
    if spec:
        raise ParameterError(f"unknown signal keys {sorted(spec)}")
    return raised_cosine_ramp(x, float(ramp)) if ramp else x


def _check_stages(stages) -> list[str]:
    stages = list(stages)
    bad = [s for s in stages if s not in STAGE_ORDER]
    if bad:
        raise ParameterError(f"unknown stages {bad}; valid: {list(STAGE_ORDER)}")
    if not stages or stages[0] != "spatialize":
        raise ParameterError("the first stage must be 'spatialize'")
    if len(set(stages)) != len(stages) or [STAGE_ORDER.index(s) for s in stages] != sorted(
            STAGE_ORDER.index(s) for s in stages):
        raise ParameterError(f"stages must follow the order {list(STAGE_ORDER)} without repeats")
    return stages


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


# --------------------------------------------------------------------- commands

def cmd_render(args) -> None:
    cfg = _resolve(args, {"condition": args.condition, "hrtf": args.hrtf})
    fs = int(cfg["sample_rate"])
    stages = _check_stages(cfg["stages"])
    hrtfs = _hrtfs(cfg["hrtf"], fs)
    if hrtfs.sample_rate != fs:
        raise ParameterError(f"HRTF set is {hrtfs.sample_rate} Hz, config asks for {fs} Hz")
    seed = args.seed or 0
    if args.input is not None:
        scenes = {"render": Scene([Source(args.azimuth, read_mono(args.input))], f"file@{args.azimuth:+d}")}
    elif cfg["condition"]:
        speech = speech_shaped_noise(2.0, seed, fs)
        s, n = condition_scenes(cfg["condition"], speech,
                                lambda k: speech_shaped_noise(2.0, seed + 1000 + k, fs),
                                cfg["ci_side"], int(cfg["n_surround"]))
        scenes = {"speech": s, "noise": n}
    else:
        if not cfg["sources"]:
            raise ParameterError("scene has no sources")
        sources = []
        for i, src in enumerate(cfg["sources"]):
            if "azimuth" not in src:
                raise ParameterError(f"source {i} has no azimuth")
            sources.append(Source(int(src["azimuth"]), _signal(src.get("signal", {}), seed + i, fs),
                                  float(src.get("level_offset", 0.0))))
        scenes = {"render": Scene(sources, "config")}
    # validate every angle before doing any work
    for scene in scenes.values():
        for s in scene.sources:
            hrtfs.pair(s.azimuth)
    bf = _dataclass_from(BeamformerParams, cfg["beamformer"], "beamformer")
    voc = _dataclass_from(VocoderParams, cfg["vocoder"], "vocoder", **({"seed": seed} if args.seed else {}))
    chain = Chain(enhanced="enhance" in stages, beamformer=bf, ci_side=cfg["ci_side"], vocoder=voc)
    if "bimodal" in stages and cfg["calibrate"]:
        chain = chain.calibrated(hrtfs)
    out = _out(args)
    for name, scene in scenes.items():
        y = render_scene(scene, hrtfs)
        if "bimodal" in stages:
            y = chain.process(y)
        elif "enhance" in stages:
            y = chain.front_end(y)
        print(write_wav(out / f"{name}.wav", y))


def cmd_enhance(args) -> None:
    cfg = _resolve(args, {})
    bf = _dataclass_from(BeamformerParams, cfg["beamformer"], "beamformer", enabled=not args.disable)
    x = read_stereo(args.input)
    print(write_wav(_out(args) / args.name, head_shadow_enhance(x, bf)))


def cmd_vocode(args) -> None:
    cfg = _resolve(args, {})
    block = dict(cfg["vocoder"])
    if args.channels is not None:
        block["n_channels"] = args.channels
    if args.seed is not None:
        block["seed"] = args.seed
    voc = _dataclass_from(VocoderParams, block, "vocoder")
    x = read_wav(args.input)
    if isinstance(x, BinauralBuffer):
        y = BinauralBuffer(vocode(x.left, voc), vocode(x.right, voc), dict(x.metadata))
    else:
        y = vocode(x, voc)
    print(write_wav(_out(args) / args.name, y))


def cmd_bimodal(args) -> None:
    cfg = _resolve(args, {"ci_side": args.ci_side, "hrtf": args.hrtf})
    block = dict(cfg["vocoder"])
    if args.channels is not None:
        block["n_channels"] = args.channels
    if args.seed is not None:
        block["seed"] = args.seed
    voc = _dataclass_from(VocoderParams, block, "vocoder")
    hl = _dataclass_from(HearingLossParams, cfg["hearing_loss"], "hearing_loss")
    bf = _dataclass_from(BeamformerParams, cfg["beamformer"], "beamformer")
    chain = Chain(enhanced=bool(cfg["enhance"] or args.enhance), beamformer=bf, ci_side=cfg["ci_side"],
                  vocoder=voc, hearing_loss=hl)
    x = read_stereo(args.input)
    if cfg["calibrate"] or args.calibrate:
        chain = chain.calibrated(_hrtfs(cfg["hrtf"], x.sample_rate))
    print(write_wav(_out(args) / args.name, chain.process(x)))


def cmd_directivity(args) -> None:
    cfg = _resolve(args, {"mode": args.mode, "hrtf": args.hrtf})
    bf = _dataclass_from(BeamformerParams, cfg["beamformer"], "beamformer")
    if cfg["mode"] == "freefield":
        mode = "freefield"
    elif cfg["mode"] == "hrtf":
        mode = _hrtfs(cfg["hrtf"])
    else:
        raise ParameterError(f"mode must be 'freefield' or 'hrtf', got {cfg['mode']!r}")
    seed = args.seed or 0
    rows = []
    for lo, hi in cfg["bands"]:
        for processing in PROCESSINGS:
            pattern = directivity_pattern(bf, (float(lo), float(hi)), cfg["angles"], mode, cfg["ear"],
                                          processing == "enhanced", float(cfg["duration"]), seed)
            rows += [[lo, hi, cfg["mode"], cfg["ear"], processing, a, v] for a, v in pattern.items()]
    out = _out(args)
    _write(out / "directivity.csv", _csv(DIRECTIVITY_COLUMNS, rows))
    _write(out / "directivity.json", _report(args, cfg, {"n_rows": len(rows)}))


DIRECTIVITY_COLUMNS = ["band_low_hz", "band_high_hz", "mode", "ear", "processing", "angle_deg", "power_db"]


def cmd_ild_curve(args) -> None:
    cfg = _resolve(args, {"hrtf": args.hrtf})
    hrtfs = _hrtfs(cfg["hrtf"], bright_spot=cfg["bright_spot"])
    block = dict(cfg["vocoder"])
    if args.seed is not None:
        block["seed"] = args.seed
    voc = _dataclass_from(VocoderParams, block, "vocoder")
    stim = default_stimulus(int(cfg["stimulus_seed"]), hrtfs.sample_rate)
    curves = []
    for processing in cfg["processings"]:
        if processing not in PROCESSINGS:
            raise ParameterError(f"unknown processing {processing!r}")
        chain = Chain(enhanced=processing == "enhanced", ci_side=cfg["ci_side"], vocoder=voc).calibrated(hrtfs, stim)
        curves.append(ild_curve(stim, hrtfs, chain, EXPERIMENT_ANGLES, pre_simulation=cfg["pre_simulation"]))
    out = _out(args)
    _write(out / "ild_curves.csv", ild_curves_csv(curves))
    summary = {c.processing: {"strictly_monotonic": c.is_strictly_monotonic(), "range_db": c.range}
               for c in curves}
    _write(out / "ild_curves.json", _report(args, cfg, summary))


def _snr_reports(cfg: dict, hrtfs: HrtfSet):
    fs = hrtfs.sample_rate
    speech = speech_shaped_noise(float(cfg["token_duration"]), int(cfg["speech_seed"]), fs)
    reports = []
    for cond in cfg["conditions"]:
        s, n = condition_scenes(cond, speech,
                                lambda k: speech_shaped_noise(float(cfg["token_duration"]), 1000 + k, fs),
                                cfg["ci_side"], int(cfg["n_surround"]))
        for processing in PROCESSINGS:
            chain = Chain(enhanced=processing == "enhanced", ci_side=cfg["ci_side"])
            reports.append(band_snr(s, n, hrtfs, chain, condition=cond))
    return reports


def cmd_snr(args) -> None:
    cfg = _resolve(args, {"hrtf": args.hrtf})
    reports = _snr_reports(cfg, _hrtfs(cfg["hrtf"]))
    summary = {}
    for r in reports:
        eff = effective_snr(r, ci_side=cfg["ci_side"], clip_db=cfg["clip_db"])
        summary.setdefault(r.condition, {})[r.processing] = {
            "mean_snr_below_1500_left_db": r.mean_below("left"),
            "mean_snr_below_1500_right_db": r.mean_below("right"),
            "effective_snr_left_db": eff.left, "effective_snr_right_db": eff.right,
            "better_ear_db": eff.better}
    out = _out(args)
    _write(out / "band_snr.csv", band_snr_csv(reports))
    _write(out / "band_snr.json", _report(args, cfg, summary))


def _localize_one(job):
    cfg, hrtf = job
    _, trials = localization_trials(cfg, _hrtfs(hrtf, bright_spot=cfg.bright_spot))
    return trials


def cmd_localize(args) -> None:
    cfg = _resolve(args, {"trials_per_angle": args.trials, "ild_noise_sigma": args.sigma,
                          "rove_range": args.rove, "hrtf": args.hrtf})
    seed = args.seed or 0
    configs = []
    for processing in cfg["processings"]:
        configs.append(LocalizationConfig(trials_per_angle=int(cfg["trials_per_angle"]),
                                          rove_range=float(cfg["rove_range"]),
                                          ild_noise_sigma=float(cfg["ild_noise_sigma"]),
                                          processing=processing, seed=seed,
                                          stimulus_seed=int(cfg["stimulus_seed"]),
                                          bright_spot=bool(cfg["bright_spot"])))
    results = _map(_localize_one, [(c, cfg["hrtf"]) for c in configs], args.jobs)
    metrics = {c.processing: localization_metrics((t.target, t.response) for t in trials)
               for c, trials in zip(configs, results)}
    trial_rows = [[c.processing, i, t.target, t.rove_db, t.ild, t.observed_ild, t.response]
                  for c, trials in zip(configs, results) for i, t in enumerate(trials)]
    out = _out(args)
    _write(out / "localization.csv", localization_csv(metrics))
    _write(out / "localization_trials.csv", _csv(TRIAL_COLUMNS, trial_rows))
    _write(out / "localization.json", _report(args, cfg, {p: {"mean_rms_error_deg": m.mean_rms}
                                                         for p, m in metrics.items()}))


TRIAL_COLUMNS = ["processing", "trial", "target_deg", "rove_db", "ild_db", "observed_ild_db", "response_deg"]


def cmd_srt(args) -> None:
    cfg = _resolve(args, {"n_runs": args.runs, "hrtf": args.hrtf})
    listener = SimulatedListener(float(cfg["srt50"]), float(cfg["slope"]))
    track = AdaptiveTrack(start_snr=float(cfg["start_snr"]), steps=tuple(float(s) for s in cfg["steps"]),
                          n_sentences=int(cfg["n_sentences"]))
    sc = SrtConfig(tuple(cfg["conditions"]), int(cfg["n_runs"]), listener, track, args.seed or 0,
                   cfg["ci_side"], int(cfg["speech_seed"]), float(cfg["token_duration"]),
                   int(cfg["n_surround"]), cfg["clip_db"])
    res = run_srt_experiment(sc, _hrtfs(cfg["hrtf"]))
    out = _out(args)
    _write(out / "srt.csv", _csv(SRT_COLUMNS, res.rows()))
    _write(out / "srt.json", _report(args, cfg, res.summary()))


# --------------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON file overriding the command defaults")
    p.add_argument("--preset", help="named figure/condition recipe")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--no-timestamp", action="store_true", help="omit the creation time from JSON reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="headshadow", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene or condition through HRTFs to WAV")
    _common(p)
    p.add_argument("--input", help="mono WAV to place at --azimuth (instead of a configured scene)")
    p.add_argument("--azimuth", type=int, default=0)
    p.add_argument("--condition", choices=CONDITIONS, help="write speech.wav and noise.wav for a condition")
    p.add_argument("--hrtf", metavar="DIR", help="HRTF directory (default: bundled synthetic set)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("enhance", help="apply head-shadow enhancement to a stereo WAV")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="enhanced.wav")
    p.add_argument("--disable", action="store_true", help="bypass the beamformer (band split only)")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("vocode", help="noise-band vocode a mono or stereo WAV")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="vocoded.wav")
    p.add_argument("--channels", type=int)
    p.set_defaults(func=cmd_vocode)

    p = sub.add_parser("bimodal", help="simulate bimodal hearing on a stereo WAV")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--name", default="bimodal.wav")
    p.add_argument("--channels", type=int)
    p.add_argument("--ci-side", choices=("left", "right"))
    p.add_argument("--enhance", action="store_true", help="apply head-shadow enhancement first")
    p.add_argument("--calibrate", action="store_true", help="equalize ear levels for a frontal reference")
    p.add_argument("--hrtf", metavar="DIR")
    p.set_defaults(func=cmd_bimodal)

    p = sub.add_parser("directivity", help="directivity pattern per band (figure 1b data)")
    _common(p)
    p.add_argument("--mode", choices=("freefield", "hrtf"))
    p.add_argument("--hrtf", metavar="DIR")
    p.set_defaults(func=cmd_directivity)

    p = sub.add_parser("ild-curve", help="broadband ILD versus angle (figure 2a data)")
    _common(p)
    p.add_argument("--hrtf", metavar="DIR")
    p.set_defaults(func=cmd_ild_curve)

    p = sub.add_parser("snr", help="per-band SNR per ear and condition (figure 3a data)")
    _common(p)
    p.add_argument("--hrtf", metavar="DIR")
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("localize", help="ideal-observer localization experiment (figure 2b/2c data)")
    _common(p)
    p.add_argument("--trials", type=int, help="trials per angle")
    p.add_argument("--sigma", type=float, help="observer ILD noise (dB)")
    p.add_argument("--rove", type=float, help="level rove half-range (dB)")
    p.add_argument("--hrtf", metavar="DIR")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("srt", help="adaptive SRT experiment (figure 3b data)")
    _common(p)
    p.add_argument("--runs", type=int, help="runs per condition and processing")
    p.add_argument("--hrtf", metavar="DIR")
    p.set_defaults(func=cmd_srt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        args.func(args)
    except ParameterError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DataError, HeadShadowError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
