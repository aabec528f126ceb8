"""Pitch transformation machinery for residual signals.

The F0 ratio r is applied in two moves that live at different points of
the conversion pipeline: WSOLA time-scales the waveform by r while
preserving pitch (before analysis), and reading the residual back at
rate r restores the duration while scaling all frequencies by r.  For
r < 1 the read-out would leave the band above r * nyquist empty, so the
residual is first zero-stuffed; that mirrors the spectrum about the old
Nyquist frequency and the read-out at rate 2r lands the fold exactly at
the band edge, keeping the residual full-band.

A power compensation of sqrt(1/r) undoes the average-power change of
the read-out stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import i0

from .errors import ConfigError, InsufficientDataError, StatisticsError
from .signal import Waveform

__all__ = [
    "F0Ratio",
    "compute_f0_ratio",
    "wsola",
    "zero_stuff",
    "resample",
    "compensate_residual_power",
    "f0_transform_residual",
]

RATIO_MIN = 0.25
RATIO_MAX = 4.0

_SINC_HALF_TAPS = 16
_KAISER_BETA = 8.0
_RESAMPLE_CHUNK = 65536


@dataclass(frozen=True)
class F0Ratio:
    """Target/source pitch ratio, limited to two octaves either way."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or not RATIO_MIN <= v <= RATIO_MAX:
            raise ConfigError(
                f"f0 ratio must lie in [{RATIO_MIN}, {RATIO_MAX}], got {self.value}"
            )
        object.__setattr__(self, "value", v)


def _ratio_value(ratio) -> float:
    if isinstance(ratio, F0Ratio):
        return ratio.value
    return F0Ratio(ratio).value


def compute_f0_ratio(source_logf0_mean, target_logf0_mean) -> F0Ratio:
    """Pitch ratio implied by two speakers' mean log F0."""
    if not (np.isfinite(source_logf0_mean) and np.isfinite(target_logf0_mean)):
        raise StatisticsError(
            f"log-F0 means must be finite, got {source_logf0_mean} and {target_logf0_mean}"
        )
    return F0Ratio(float(np.exp(target_logf0_mean - source_logf0_mean)))


def wsola(w: Waveform, ratio, window_s=0.025, tolerance_s=0.0075) -> Waveform:
    """Time-scale a signal without changing its pitch.

    Waveform-similarity overlap-add: output frames advance by half a
    Hanning window; each is taken from the input near the time-mapped
    position, shifted within +-tolerance to maximize normalized
    cross-correlation with the natural continuation of the previous
    frame.  Output length is round(ratio * len(w)); ratio 1.0 returns
    the input verbatim.
    """
    r = _ratio_value(ratio)
    if r == 1.0:
        return w
    x = w.samples
    n = x.size
    win_len = int(round(window_s * w.sample_rate))
    if win_len < 4:
        raise ConfigError(f"window of {window_s} s is too short at {w.sample_rate} Hz")
    if n < 4 * win_len:
        raise InsufficientDataError(
            f"need at least {4 * win_len} samples (4 windows), got {n}"
        )
    hop = win_len // 2
    tol = int(round(tolerance_s * w.sample_rate))
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_len) / win_len)

    out_len = int(round(r * n))
    acc = np.zeros(out_len + win_len)
    norm = np.zeros(out_len + win_len)

    # first frame anchors the alignment chain
    acc[:win_len] += window * x[:win_len]
    norm[:win_len] += window
    prev = 0  # analysis start of the frame just written

    k = 1
    while k * hop < out_len:
        target = int(round(k * hop / r))
        target = min(max(target, 0), n - win_len)
        # the continuation a listener would expect next
        nat_start = min(prev + hop, n - win_len)
        natural = x[nat_start: nat_start + win_len]

        lo = max(target - tol, 0)
        hi = min(target + tol, n - win_len)
        region = x[lo: hi + win_len]
        cands = np.lib.stride_tricks.sliding_window_view(region, win_len)
        scores = cands @ natural
        nat_norm = np.sqrt(np.dot(natural, natural))
        cand_norm = np.sqrt(np.einsum("ij,ij->i", cands, cands))
        denom = cand_norm * nat_norm
        with np.errstate(invalid="ignore", divide="ignore"):
            scores = np.where(denom > 0.0, scores / denom, 0.0)
        best = lo + int(np.argmax(scores))

        pos = k * hop
        acc[pos: pos + win_len] += window * x[best: best + win_len]
        norm[pos: pos + win_len] += window
        prev = best
        k += 1

    out = acc[:out_len] / np.maximum(norm[:out_len], 1e-8)
    return Waveform(out, w.sample_rate)


def zero_stuff(w: Waveform) -> Waveform:
    """Insert a zero after every sample; the declared rate doubles.

    At the doubled rate the signal occupies its old band plus a mirror
    image about the old Nyquist frequency, which is what lets a
    pitch-lowered residual keep energy in its upper band.
    """
    x = w.samples
    out = np.zeros(2 * x.size)
    out[::2] = x
    return Waveform(out, 2 * w.sample_rate)


def _sinc_taps(offsets, cutoff):
    # Kaiser-windowed sinc, deliberately without the cutoff amplitude
    # factor: a faster-than-unity read-out then has passband gain equal
    # to the rate, which compensate_residual_power is calibrated against
    profile = np.zeros_like(offsets)
    inside = np.abs(offsets) < _SINC_HALF_TAPS
    t = offsets[inside] / _SINC_HALF_TAPS
    profile[inside] = i0(_KAISER_BETA * np.sqrt(1.0 - t * t)) / i0(_KAISER_BETA)
    return np.sinc(cutoff * offsets) * profile


def resample(w: Waveform, ratio) -> Waveform:
    """Read a signal out at a different rate via windowed-sinc interpolation.

    Output sample k is the input evaluated at position k * ratio using a
    32-tap Kaiser-windowed sinc, anti-alias filtered at nyquist/ratio
    when reading faster than unity.  A sinusoid at frequency f comes out
    at ratio * f; the declared sample rate carries over, and the output
    length is round(len(w) / ratio).
    """
    r = _ratio_value(ratio)
    x = w.samples
    n = x.size
    out_len = int(round(n / r))
    if n == 0 or out_len == 0:
        return Waveform(np.zeros(0), w.sample_rate)

    cutoff = min(1.0, 1.0 / r)
    pad = _SINC_HALF_TAPS + 2
    padded = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    rel = np.arange(-_SINC_HALF_TAPS + 1, _SINC_HALF_TAPS + 1)

    out = np.empty(out_len)
    for start in range(0, out_len, _RESAMPLE_CHUNK):
        stop = min(start + _RESAMPLE_CHUNK, out_len)
        pos = np.arange(start, stop) * r
        base = np.floor(pos).astype(np.intp)
        frac = (pos - base)[:, None]
        taps = _sinc_taps(rel[None, :] - frac, cutoff)
        idx = base[:, None] + rel[None, :] + pad
        out[start:stop] = np.einsum("ij,ij->i", padded[idx], taps)
    return Waveform(out, w.sample_rate)


def compensate_residual_power(res: Waveform, ratio) -> Waveform:
    """Undo the average-power change of a rate-``ratio`` read-out.

    The read-out stage changes the mean power of a white residual by a
    factor of the ratio, so scaling by sqrt(1 / ratio) restores it.
    Applied unconditionally for every ratio.
    """
    r = _ratio_value(ratio)
    return Waveform(res.samples * np.sqrt(1.0 / r), res.sample_rate)


def f0_transform_residual(res: Waveform, ratio) -> Waveform:
    """Scale the pitch of a residual by ``ratio``.

    ratio < 1 routes through zero stuffing so the emptied upper band is
    refilled by the spectral fold; the read-out at 2 * ratio brings the
    doubled rate back down, so the output is declared at the input's
    rate for every path.  Output length is round(len / ratio) and
    ratio 1.0 is the identity.
    """
    r = _ratio_value(ratio)
    if r == 1.0:
        return res
    if r < 1.0:
        folded = zero_stuff(res)
        read = resample(folded, 2.0 * r)
        read = Waveform(read.samples, res.sample_rate)
    else:
        read = resample(res, r)
    return compensate_residual_power(read, r)
