"""Detection of collapsed frames in generated waveforms.

Filtering a pitch-transformed residual with variance-boosted features
can go audibly wrong on isolated frames: the waveform blows past the
envelope a conventional excitation would produce.  Those frames are
found by comparing smoothed amplitude envelopes of the test signal
against a reference rendering of the same features, and the offending
frames fall back to safer features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .analysis import MelCepstrumSequence
from .errors import AlignmentError, ConfigError, FormatError, InsufficientDataError

__all__ = [
    "EnvelopeSignal",
    "extract_envelope",
    "detect_collapsed_frames",
    "substitute_features",
]

DEFAULT_THRESHOLD = 10000.0  # int16 amplitude scale
DEFAULT_SLOT = 256


@dataclass(frozen=True)
class EnvelopeSignal:
    """Per-sample smoothed amplitude envelope, int16 amplitude scale."""

    values: np.ndarray
    sample_rate: int
    slot_length: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise FormatError(f"envelope must be 1-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise FormatError("envelope contains NaN or Inf")
        if arr.size and arr.min() < 0.0:
            raise FormatError("envelope values must be non-negative")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.slot_length < 1:
            raise ConfigError(f"slot_length must be >= 1, got {self.slot_length}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size


def extract_envelope(w, slot_length=DEFAULT_SLOT) -> EnvelopeSignal:
    """Smoothed amplitude envelope of a waveform.

    The analytic-signal magnitude (full-length DFT Hilbert transformer)
    is reduced to a per-slot maximum over non-overlapping slots (the
    last slot may be partial), held for each slot's duration, then
    smoothed by a centered moving average of 2 * slot_length + 1
    samples.  The slot maximum keeps short bursts visible; the smoothing
    removes the staircase so frame comparisons do not hinge on slot
    boundaries.  Output length equals input length.
    """
    if slot_length < 8:
        raise ConfigError(f"slot_length must be >= 8, got {slot_length}")
    x = w.samples
    n = x.size
    if n == 0:
        raise InsufficientDataError("cannot take the envelope of an empty signal")
    magnitude = np.abs(hilbert(x))
    starts = np.arange(0, n, slot_length)
    slot_max = np.maximum.reduceat(magnitude, starts)
    held = np.repeat(slot_max, slot_length)[:n]
    width = 2 * slot_length + 1
    smoothed = np.convolve(held, np.full(width, 1.0 / width), mode="same")
    return EnvelopeSignal(smoothed, w.sample_rate, slot_length)


def detect_collapsed_frames(env_ref: EnvelopeSignal, env_test: EnvelopeSignal,
                            threshold, frame_shift_samples, frame_count) -> set:
    """Frames where the test envelope overshoots the reference.

    Sample n is collapsed when env_test[n] - env_ref[n] > threshold
    (strictly); frame t is flagged when any sample of its span
    [t * shift, (t+1) * shift) is collapsed.  The comparison is
    one-sided: frames where the test signal sits below the reference are
    never flagged.  Returns flagged frame indices within
    [0, frame_count).  Envelope lengths may differ by up to one slot
    (the signals behind them may round differently); the comparison runs
    on the shorter length.
    """
    if threshold <= 0.0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    if frame_shift_samples < 1:
        raise ConfigError(f"frame_shift_samples must be >= 1, got {frame_shift_samples}")
    if frame_count < 0:
        raise ConfigError(f"frame_count must be >= 0, got {frame_count}")
    if env_test.sample_rate != env_ref.sample_rate:
        raise AlignmentError(
            f"envelope rates differ: {env_test.sample_rate} vs {env_ref.sample_rate}"
        )
    if env_test.slot_length != env_ref.slot_length:
        raise AlignmentError(
            f"envelope slot lengths differ: {env_test.slot_length} vs {env_ref.slot_length}"
        )
    n = min(len(env_test), len(env_ref))
    if max(len(env_test), len(env_ref)) - n > env_test.slot_length:
        raise AlignmentError(
            f"envelope lengths {len(env_test)} and {len(env_ref)} differ "
            "by more than one slot"
        )
    if n == 0:
        return set()
    excess = env_test.values[:n] - env_ref.values[:n] > threshold
    frames = np.unique(np.nonzero(excess)[0] // frame_shift_samples)
    return {int(t) for t in frames if t < frame_count}


def substitute_features(postfiltered: MelCepstrumSequence,
                        plain: MelCepstrumSequence,
                        flagged) -> MelCepstrumSequence:
    """Replace flagged frames of one feature sequence with another's.

    Output frame t comes from ``plain`` when t is flagged, from
    ``postfiltered`` otherwise; metadata follows ``postfiltered``.  An
    empty flag set returns an identical copy.
    """
    if postfiltered.frames.shape != plain.frames.shape:
        raise AlignmentError(
            f"frame shapes differ: {postfiltered.frames.shape} vs {plain.frames.shape}"
        )
    idx = np.array(sorted(int(t) for t in flagged), dtype=np.intp)
    if idx.size:
        if idx[0] < 0 or idx[-1] >= postfiltered.frames.shape[0]:
            raise ConfigError(
                f"flagged indices must lie in [0, {postfiltered.frames.shape[0]}), "
                f"got range [{idx[0]}, {idx[-1]}]"
            )
    frames = postfiltered.frames.copy()
    frames[idx] = plain.frames[idx]
    return MelCepstrumSequence(frames, postfiltered.alpha,
                               postfiltered.frame_shift_s,
                               postfiltered.sample_rate)
