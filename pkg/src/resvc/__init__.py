"""Residual-excited voice conversion.

Converts a speaker's voice by filtering their own pitch-shifted glottal
residual with converted spectral features, instead of synthesizing from
a pulse/noise excitation.  See the pipeline module for the stage-by-
stage flow and the README for the command-line tools.
"""

from .analysis import (F0Contour, MelCepstrumSequence, estimate_f0,
                       extract_mcep, interpolate_frames,
                       mcep_to_log_spectrum, unwarp_frequency,
                       warp_frequency)
from .collapse import (EnvelopeSignal, detect_collapsed_frames,
                       extract_envelope, substitute_features)
from .convert import (SpeakerStats, collect_stats, convert_f0,
                      external_converter, gv_postfilter, identity_converter,
                      mean_variance_converter)
from .errors import (AlignmentError, ConfigError, DegenerateSignalError,
                     Error, FormatError, InsufficientDataError,
                     StatisticsError)
from .f0transform import (F0Ratio, compensate_residual_power,
                          compute_f0_ratio, f0_transform_residual, resample,
                          wsola, zero_stuff)
from .mlsa import (MlsaFilterState, inverse_filter, mc2b, reference_vocoder,
                   synthesis_filter)
from .pipeline import (ConversionConfig, PipelineTrace, convert_utterance,
                       load_f0, load_mcep, load_stats, save_f0, save_mcep,
                       save_stats, write_trace)
from .signal import Waveform, match_power, power, read_wav, write_wav

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "ConfigError",
    "ConversionConfig",
    "DegenerateSignalError",
    "EnvelopeSignal",
    "Error",
    "F0Contour",
    "F0Ratio",
    "FormatError",
    "InsufficientDataError",
    "MelCepstrumSequence",
    "MlsaFilterState",
    "PipelineTrace",
    "SpeakerStats",
    "StatisticsError",
    "Waveform",
    "collect_stats",
    "compensate_residual_power",
    "compute_f0_ratio",
    "convert_f0",
    "convert_utterance",
    "detect_collapsed_frames",
    "estimate_f0",
    "external_converter",
    "extract_envelope",
    "extract_mcep",
    "f0_transform_residual",
    "gv_postfilter",
    "identity_converter",
    "interpolate_frames",
    "inverse_filter",
    "load_f0",
    "load_mcep",
    "load_stats",
    "match_power",
    "mc2b",
    "mcep_to_log_spectrum",
    "mean_variance_converter",
    "power",
    "read_wav",
    "reference_vocoder",
    "resample",
    "save_f0",
    "save_mcep",
    "save_stats",
    "substitute_features",
    "synthesis_filter",
    "unwarp_frequency",
    "warp_frequency",
    "write_trace",
    "write_wav",
    "wsola",
    "zero_stuff",
]
