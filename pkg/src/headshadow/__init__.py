"""Head-shadow enhancement for bimodal listeners, with a desk-scale simulation of its evaluation."""

__version__ = "0.1.0"

from .errors import DataError, HeadShadowError, ParameterError
from .dsp import (BinauralBuffer, FirFilter, IirFilter, SampleBuffer, apply_filter, band_powers, band_split,
                  convolve, design_butterworth_bandpass, design_butterworth_lowpass, fractional_delay,
                  power_spectrum, rms_level_db)
from .signals import default_stimulus, speech_shaped_noise
from .spatial import (EXPERIMENT_ANGLES, HrtfSet, Scene, Source, SphericalHeadModel, bundled_hrtf_set,
                      condition_scenes, load_hrtf_set, render_scene, render_source, save_hrtf_set,
                      synth_spherical_hrtf, synthetic_hrtf_set, truncate_ir)
from .beamformer import (BeamformerParams, comb_null_frequencies, directivity_pattern, head_shadow_enhance,
                         plane_wave)
from .bimodal import HearingLossParams, VocoderParams, hearing_loss_filter, simulate_bimodal, vocode
from .analysis import (BandSnrReport, Chain, IldCurve, LocalizationMetrics, band_snr, broadband_ild, ild_curve,
                       localization_metrics)
from .experiments import (AdaptiveTrack, LocalizationConfig, SimulatedListener, SrtConfig, effective_snr,
                          ideal_observer_localize, run_adaptive_srt, run_localization_experiment,
                          run_srt_experiment, sentence_score)
