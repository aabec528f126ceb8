"""Speaker statistics and spectral feature conversion.

The converters map a source feature sequence toward a target speaker
and are deliberately simple (per-dimension mean-variance mapping, or
frames precomputed by an external system); the interesting part of this
package is what happens to the waveform afterwards, not the regression.
A converter is any callable taking a MelCepstrumSequence and returning
one of the same shape and metadata.

Dimension 0 carries the frame gain and is never altered by a converter
or by the variance postfilter.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import F0_CEIL, F0_FLOOR, F0Contour, MelCepstrumSequence
from .errors import AlignmentError, InsufficientDataError, StatisticsError

__all__ = [
    "SpeakerStats",
    "collect_stats",
    "identity_converter",
    "mean_variance_converter",
    "external_converter",
    "convert_f0",
    "gv_postfilter",
]

MIN_VOICED_FRAMES = 10


@dataclass(frozen=True)
class SpeakerStats:
    """Per-speaker statistics needed for conversion.

    mcep_mean / mcep_var are pooled over all frames of all utterances;
    gv is the mean over utterances of the per-utterance variance, the
    quantity the variance postfilter restores.  The vectors are indexed
    by coefficient; entry 0 is carried for alignment but never applied,
    and gv must be strictly positive for dimensions 1..M.
    """

    logf0_mean: float
    logf0_var: float
    mcep_mean: np.ndarray
    mcep_var: np.ndarray
    gv: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mcep_mean, dtype=np.float64)
        var = np.ascontiguousarray(self.mcep_var, dtype=np.float64)
        gv = np.ascontiguousarray(self.gv, dtype=np.float64)
        if not (mean.ndim == var.ndim == gv.ndim == 1):
            raise StatisticsError("mcep_mean, mcep_var, gv must be 1-D vectors")
        if not mean.shape == var.shape == gv.shape:
            raise StatisticsError(
                f"statistics shapes disagree: mean {mean.shape}, "
                f"var {var.shape}, gv {gv.shape}"
            )
        if mean.size < 2:
            raise StatisticsError("statistics need order >= 1 (length >= 2)")
        for name, vec in (("mcep_mean", mean), ("mcep_var", var), ("gv", gv)):
            if not np.all(np.isfinite(vec)):
                raise StatisticsError(f"{name} contains NaN or Inf")
        if np.any(var < 0.0):
            raise StatisticsError("mcep_var must be non-negative")
        if np.any(gv[1:] <= 0.0):
            bad = 1 + int(np.argmax(gv[1:] <= 0.0))
            raise StatisticsError(
                f"gv must be strictly positive for dimensions 1..M; "
                f"dimension {bad} is {gv[bad]:g}"
            )
        if not (np.isfinite(self.logf0_mean) and np.isfinite(self.logf0_var)):
            raise StatisticsError("log-F0 statistics contain NaN or Inf")
        if self.logf0_var < 0.0:
            raise StatisticsError(f"logf0_var must be non-negative, got {self.logf0_var}")
        for name, vec in (("mcep_mean", mean), ("mcep_var", var), ("gv", gv)):
            vec.flags.writeable = False
            object.__setattr__(self, name, vec)

    @property
    def order(self) -> int:
        return self.mcep_mean.size - 1


def collect_stats(utterances) -> SpeakerStats:
    """Pool statistics over a speaker's utterances.

    ``utterances`` is a sequence of (MelCepstrumSequence, F0Contour)
    pairs.  At least MIN_VOICED_FRAMES voiced frames are required across
    the whole set, otherwise the log-F0 statistics would be meaningless.
    """
    utterances = list(utterances)
    if not utterances:
        raise StatisticsError("no utterances given")
    width = utterances[0][0].frames.shape[1]
    for mc, _ in utterances[1:]:
        if mc.frames.shape[1] != width:
            raise StatisticsError("utterances disagree on mel-cepstral order")

    all_frames = np.concatenate([mc.frames for mc, _ in utterances], axis=0)
    if all_frames.shape[0] < 2:
        raise StatisticsError("need at least 2 frames in total")
    per_utt_var = [np.var(mc.frames, axis=0) for mc, _ in utterances]

    voiced = np.concatenate([f0.values[f0.values > 0.0] for _, f0 in utterances])
    if voiced.size < MIN_VOICED_FRAMES:
        raise StatisticsError(
            f"only {voiced.size} voiced frames; need at least {MIN_VOICED_FRAMES}"
        )
    logf0 = np.log(voiced)

    return SpeakerStats(
        logf0_mean=float(np.mean(logf0)),
        logf0_var=float(np.var(logf0)),
        mcep_mean=np.mean(all_frames, axis=0),
        mcep_var=np.var(all_frames, axis=0),
        gv=np.mean(per_utt_var, axis=0),
    )


def _rewrap(m: MelCepstrumSequence, frames) -> MelCepstrumSequence:
    return MelCepstrumSequence(frames, m.alpha, m.frame_shift_s, m.sample_rate)


def identity_converter():
    """Converter that passes features through unchanged."""

    def convert(m: MelCepstrumSequence) -> MelCepstrumSequence:
        return _rewrap(m, m.frames.copy())

    return convert


def mean_variance_converter(source: SpeakerStats, target: SpeakerStats):
    """Per-dimension gaussian mapping from source to target statistics.

    Dimensions 1..M are shifted and rescaled so their pooled mean and
    variance match the target's.  Dimension 0 passes through.  Source
    variances must be strictly positive for dimensions 1..M.
    """
    if source.mcep_mean.size != target.mcep_mean.size:
        raise StatisticsError(
            f"source order {source.order} != target order {target.order}"
        )
    src_var = source.mcep_var[1:]
    if np.any(src_var <= 0.0):
        bad = 1 + int(np.argmax(src_var <= 0.0))
        raise StatisticsError(
            f"source variance is zero in dimension {bad}; cannot rescale it"
        )
    scale = np.sqrt(target.mcep_var[1:] / src_var)

    def convert(m: MelCepstrumSequence) -> MelCepstrumSequence:
        frames = m.frames.copy()
        frames[:, 1:] = ((frames[:, 1:] - source.mcep_mean[1:]) * scale
                         + target.mcep_mean[1:])
        return _rewrap(m, frames)

    return convert


def external_converter(converted: MelCepstrumSequence):
    """Converter that substitutes frames produced by an outside model.

    The preloaded frames replace dimensions 1..M wholesale; dimension 0
    is kept from the input so the source gain track survives.  The input
    must match the preloaded sequence's frame count and order.
    """

    def convert(m: MelCepstrumSequence) -> MelCepstrumSequence:
        if m.frames.shape != converted.frames.shape:
            raise AlignmentError(
                f"external frames have shape {converted.frames.shape}, "
                f"input has {m.frames.shape}"
            )
        frames = converted.frames.copy()
        frames[:, 0] = m.frames[:, 0]
        return _rewrap(m, frames)

    return convert


def convert_f0(f0: F0Contour, source: SpeakerStats, target: SpeakerStats) -> F0Contour:
    """Map an F0 contour to the target speaker in the log domain.

    Voiced frames are transformed linearly so their log-F0 mean and
    variance match the target statistics; a zero source variance
    degrades to a mean shift.  Unvoiced frames stay unvoiced, and the
    result is clamped to the valid F0 range.
    """
    values = f0.values.copy()
    voiced = values > 0.0
    if np.any(voiced):
        logv = np.log(values[voiced])
        if source.logf0_var > 0.0:
            scale = np.sqrt(target.logf0_var / source.logf0_var)
        else:
            scale = 1.0
        logv = (logv - source.logf0_mean) * scale + target.logf0_mean
        values[voiced] = np.clip(np.exp(logv), F0_FLOOR, F0_CEIL)
    return F0Contour(values, f0.frame_shift_s)


def gv_postfilter(m: MelCepstrumSequence, target_gv) -> MelCepstrumSequence:
    """Restore per-dimension variance to a target's global variance.

    Statistical conversion shrinks feature variance, which mutes the
    converted voice; rescaling each dimension about its own mean undoes
    that.  Dimension 0 is untouched.  A dimension whose variance within
    the utterance is zero cannot be rescaled and is left alone with a
    warning.  Applying the postfilter twice is a no-op the second time.
    """
    gv = np.asarray(target_gv, dtype=np.float64)
    if gv.shape != (m.frames.shape[1],):
        raise StatisticsError(
            f"target_gv has shape {gv.shape}, features need ({m.frames.shape[1]},)"
        )
    if not np.all(np.isfinite(gv)) or np.any(gv[1:] <= 0.0):
        raise StatisticsError("target_gv must be finite and positive for dims 1..M")
    if m.frames.shape[0] < 2:
        raise InsufficientDataError(
            f"need at least 2 frames to measure variance, got {m.frames.shape[0]}"
        )

    frames = m.frames.copy()
    mean = np.mean(frames[:, 1:], axis=0)
    var = np.var(frames[:, 1:], axis=0)
    dead = var == 0.0
    if np.any(dead):
        dims = ", ".join(str(1 + d) for d in np.nonzero(dead)[0])
        warnings.warn(
            f"dimension(s) {dims} have zero variance in this utterance; left unscaled",
            RuntimeWarning,
            stacklevel=2,
        )
    scale = np.ones_like(var)
    live = ~dead
    scale[live] = np.sqrt(gv[1:][live] / var[live])
    frames[:, 1:] = (frames[:, 1:] - mean) * scale + mean
    return _rewrap(m, frames)
