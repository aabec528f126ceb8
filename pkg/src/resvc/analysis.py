"""Spectral feature extraction: mel-cepstra and F0 contours.

Mel-cepstra model the log magnitude spectrum as a cosine series on a
warped frequency axis:

    log|H(w)| = sum_k c[k] * cos(k * warp(w))

with the one-sided convention (coefficients 1..M carry a factor of 2 so
the series can be evaluated directly).  The warp is the first-order
all-pass frequency mapping controlled by ``alpha``; alpha = 0.455 places
the axis close to the mel scale at 22050 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, InsufficientDataError

__all__ = [
    "MelCepstrumSequence",
    "F0Contour",
    "warp_frequency",
    "unwarp_frequency",
    "extract_mcep",
    "mcep_to_log_spectrum",
    "estimate_f0",
    "interpolate_frames",
]

F0_FLOOR = 40.0
F0_CEIL = 800.0

# log-magnitude floor; keeps silent frames from driving the cepstrum to -inf
_LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class MelCepstrumSequence:
    """Frames of mel-cepstral coefficients, shape (T, order + 1)."""

    frames: np.ndarray
    alpha: float
    frame_shift_s: float
    sample_rate: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.frames, dtype=np.float64)
        if arr.ndim != 2:
            raise FormatError(f"mcep frames must be 2-D, got shape {arr.shape}")
        if arr.shape[1] < 2:
            raise FormatError(f"mcep frames need order >= 1, got {arr.shape[1]} columns")
        if arr.size and not np.all(np.isfinite(arr)):
            raise FormatError("mcep frames contain NaN or Inf")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.frame_shift_s <= 0.0:
            raise ConfigError(f"frame_shift_s must be positive, got {self.frame_shift_s}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        arr.flags.writeable = False
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.frames.shape[0]

    @property
    def order(self) -> int:
        return self.frames.shape[1] - 1


@dataclass(frozen=True)
class F0Contour:
    """Per-frame fundamental frequency in Hz; 0 marks unvoiced frames."""

    values: np.ndarray
    frame_shift_s: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise FormatError(f"f0 values must be 1-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise FormatError("f0 values contain NaN or Inf")
        if np.any(arr < 0.0):
            raise FormatError("f0 values must be non-negative")
        voiced = arr[arr > 0.0]
        if voiced.size and (voiced.min() < F0_FLOOR or voiced.max() > F0_CEIL):
            raise FormatError(
                f"voiced f0 must lie in [{F0_FLOOR}, {F0_CEIL}] Hz, "
                f"got range [{voiced.min():g}, {voiced.max():g}]"
            )
        if self.frame_shift_s <= 0.0:
            raise ConfigError(f"frame_shift_s must be positive, got {self.frame_shift_s}")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    @property
    def voiced_mask(self) -> np.ndarray:
        return self.values > 0.0


def warp_frequency(omega, alpha):
    """Map natural frequency [0, pi] onto the warped axis.

    tan(w'/2) = ((1 + a) / (1 - a)) tan(w/2), written in arctan2 form so
    the endpoint w = pi maps to exactly pi.
    """
    omega = np.asarray(omega, dtype=np.float64)
    return 2.0 * np.arctan2((1.0 + alpha) * np.sin(omega / 2.0),
                            (1.0 - alpha) * np.cos(omega / 2.0))


def unwarp_frequency(omega_warped, alpha):
    """Inverse of warp_frequency."""
    omega_warped = np.asarray(omega_warped, dtype=np.float64)
    return 2.0 * np.arctan2((1.0 - alpha) * np.sin(omega_warped / 2.0),
                            (1.0 + alpha) * np.cos(omega_warped / 2.0))


def _check_analysis_params(order, alpha, frame_shift_s, frame_length):
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must be in [0, 1), got {alpha}")
    if frame_shift_s <= 0.0:
        raise ConfigError(f"frame_shift_s must be positive, got {frame_shift_s}")
    if frame_length < 64 or frame_length & (frame_length - 1):
        raise ConfigError(
            f"frame_length must be a power of two >= 64, got {frame_length}"
        )


def extract_mcep(w, order=35, alpha=0.455, frame_shift_s=0.005,
                 frame_length=1024) -> MelCepstrumSequence:
    """Extract mel-cepstral frames from a waveform.

    Each frame is Hanning-windowed, transformed with a 4x oversampled
    FFT, floored in magnitude, resampled onto the alpha-warped frequency
    axis, and inverse-transformed to cepstral coefficients.  Frame t
    covers samples [t * shift, t * shift + frame_length).
    """
    _check_analysis_params(order, alpha, frame_shift_s, frame_length)
    x = w.samples
    rate = w.sample_rate
    shift = int(round(frame_shift_s * rate))
    if shift < 1:
        raise ConfigError(f"frame shift rounds to {shift} samples at {rate} Hz")
    if x.size < frame_length:
        raise InsufficientDataError(
            f"need at least {frame_length} samples for one frame, got {x.size}"
        )
    n_frames = (x.size - frame_length) // shift + 1

    frames = np.lib.stride_tricks.sliding_window_view(x, frame_length)[::shift][:n_frames]
    window = np.hanning(frame_length)

    n_fft = 4 * frame_length
    half = n_fft // 2
    spectra = np.fft.rfft(frames * window, n=n_fft, axis=1)
    logmag = np.log(np.maximum(np.abs(spectra), _LOG_FLOOR))

    # resample the log spectrum onto a grid uniform in warped frequency;
    # the sample positions are frame-independent, so precompute the
    # linear-interpolation weights once
    omega_warped = np.linspace(0.0, np.pi, half + 1)
    pos = unwarp_frequency(omega_warped, alpha) * (half / np.pi)
    i0 = np.clip(np.floor(pos).astype(np.intp), 0, half - 1)
    frac = pos - i0
    warped = logmag[:, i0] * (1.0 - frac) + logmag[:, i0 + 1] * frac

    cep = np.fft.irfft(warped, n=n_fft, axis=1)[:, : order + 1]
    cep[:, 1:] *= 2.0
    return MelCepstrumSequence(cep, alpha, frame_shift_s, rate)


def mcep_to_log_spectrum(frame, alpha, n_bins=513) -> np.ndarray:
    """Evaluate one mel-cepstral frame as log|H| on a uniform frequency grid.

    The grid spans [0, pi] inclusive with n_bins points (natural, not
    warped, frequency), matching rfft bin layout for n_fft = 2*(n_bins-1).
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise FormatError(f"expected a single coefficient frame, got shape {frame.shape}")
    if n_bins < 2:
        raise ConfigError(f"n_bins must be >= 2, got {n_bins}")
    omega = np.linspace(0.0, np.pi, n_bins)
    omega_warped = warp_frequency(omega, alpha)
    k = np.arange(frame.size)
    return np.cos(np.outer(omega_warped, k)) @ frame


def estimate_f0(w, frame_shift_s=0.005, fmin=70.0, fmax=500.0,
                voicing_threshold=0.3) -> F0Contour:
    """Estimate an F0 contour by windowed normalized autocorrelation.

    40 ms Hann-windowed frames; the peak of the normalized
    autocorrelation over the lag range [rate/fmax, rate/fmin] is refined
    by parabolic interpolation, and frames whose peak falls below the
    voicing threshold are marked unvoiced (0).
    """
    if not 0.0 < fmin < fmax:
        raise ConfigError(f"need 0 < fmin < fmax, got fmin={fmin}, fmax={fmax}")
    x = w.samples
    rate = w.sample_rate
    if fmax >= rate / 4.0:
        raise ConfigError(
            f"fmax {fmax} Hz too high for reliable lags at {rate} Hz "
            f"(must stay below {rate / 4.0:g})"
        )
    shift = int(round(frame_shift_s * rate))
    if shift < 1:
        raise ConfigError(f"frame shift rounds to {shift} samples at {rate} Hz")
    win_len = int(round(0.04 * rate))
    if x.size < win_len:
        raise InsufficientDataError(
            f"need at least {win_len} samples ({rate} Hz, 40 ms), got {x.size}"
        )
    lag_min = max(2, int(np.ceil(rate / fmax)))
    lag_max = min(int(np.floor(rate / fmin)), win_len - 2)
    if lag_min >= lag_max:
        raise ConfigError(
            f"lag range [{lag_min}, {lag_max}] empty for a 40 ms window at {rate} Hz"
        )

    n_frames = (x.size - win_len) // shift + 1
    window = np.hanning(win_len)
    values = np.zeros(n_frames)

    for t in range(n_frames):
        seg = x[t * shift: t * shift + win_len] * window
        energy = np.cumsum(seg * seg)
        total = energy[-1]
        if total <= 0.0:
            continue
        ac = np.correlate(seg, seg, mode="full")[win_len - 1:]
        lags = np.arange(lag_min, lag_max + 1)
        # per-lag normalization: both overlapping segments at unit energy
        head = energy[win_len - 1 - lags]
        tail = total - energy[lags - 1]
        denom = np.sqrt(head * tail)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(denom > 0.0, ac[lags] / denom, 0.0)
        i = int(np.argmax(r))
        if r[i] < voicing_threshold:
            continue
        lag = float(lags[i])
        if 0 < i < r.size - 1:
            a, b, c = r[i - 1], r[i], r[i + 1]
            den = a - 2.0 * b + c
            if den < 0.0:
                delta = 0.5 * (a - c) / den
                if abs(delta) <= 1.0:
                    lag += delta
        values[t] = min(max(rate / lag, F0_FLOOR), F0_CEIL)

    return F0Contour(values, frame_shift_s)


def interpolate_frames(m: MelCepstrumSequence, target_frame_count) -> MelCepstrumSequence:
    """Linearly resample a feature sequence along time.

    Per-coefficient linear interpolation on the normalized frame-index
    axis; the first and last frames are preserved exactly, and metadata
    carries over unchanged.  A matching target count returns an
    identical sequence.
    """
    frames = m.frames
    t = frames.shape[0]
    if t < 2:
        raise InsufficientDataError(f"need at least 2 frames to interpolate, got {t}")
    if target_frame_count < 2:
        raise ConfigError(f"target_frame_count must be >= 2, got {target_frame_count}")
    if target_frame_count == t:
        out = frames.copy()
    else:
        pos = np.linspace(0.0, t - 1.0, target_frame_count)
        i0 = np.clip(np.floor(pos).astype(np.intp), 0, t - 2)
        frac = (pos - i0)[:, None]
        out = frames[i0] * (1.0 - frac) + frames[i0 + 1] * frac
        out[0] = frames[0]
        out[-1] = frames[-1]
    return MelCepstrumSequence(out, m.alpha, m.frame_shift_s, m.sample_rate)
