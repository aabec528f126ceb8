"""Mel log spectrum approximation (MLSA) filtering.

The filter realizes exp(F(z)) for a mel-cepstral log spectrum F via a
Pade approximation of the exponential, using the classic cascade of a
first-order basic filter and a warped-FIR feedback section.  Coefficient
trajectories are interpolated sample by sample, so the filter tracks the
frame sequence without block boundaries.

The per-sample recursion is compiled with numba; everything around it is
plain numpy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .analysis import F0Contour, MelCepstrumSequence
from .errors import AlignmentError, ConfigError
from .signal import Waveform

__all__ = ["MlsaFilterState", "synthesis_filter", "inverse_filter",
           "reference_vocoder", "mc2b"]

# Pade approximants of exp(x) used by the MLSA structure, by order
_PADE = {
    4: np.array([1.0, 4.999273e-1, 1.067005e-1, 1.170221e-2, 5.656279e-4]),
    5: np.array([1.0, 4.999391e-1, 1.107098e-1, 1.369984e-2, 9.564853e-4,
                 3.041721e-5]),
}
# |F(e^jw)| bound inside which the approximation stays stable
_STABLE_RADIUS = {4: 4.5, 5: 6.0}

# gain exponent clamp; exp(20) is already far beyond any sane frame gain
_MAX_LOG_GAIN = 20.0


def mc2b(cep, alpha):
    """Convert mel-cepstra to MLSA filter coefficients.

    Works on one frame (1-D) or a frame stack (2-D, transform applied
    row-wise).  The recursion removes the all-pass feedback so the b
    coefficients can drive the warped FIR directly.
    """
    cep = np.asarray(cep, dtype=np.float64)
    b = cep.copy()
    m = cep.shape[-1] - 1
    for k in range(m - 1, -1, -1):
        b[..., k] = cep[..., k] - alpha * b[..., k + 1]
    return b


@dataclass
class MlsaFilterState:
    """Delay-line state of one filtering run; starts all zero.

    d1 backs the first-order basic filter (2 * (pade_order + 1) taps);
    d2 backs the warped-FIR cascade (pade_order lines of order + 2 taps
    plus the feedback products).  A state instance belongs to a single
    run; the recursion is causal, so output sample n depends only on
    inputs up to n.
    """

    order: int
    alpha: float
    pade_order: int
    d1: np.ndarray = field(init=False)
    d2: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError(f"order must be >= 1, got {self.order}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.pade_order not in _PADE:
            raise ConfigError(
                f"pade_order must be one of {sorted(_PADE)}, got {self.pade_order}"
            )
        self.reset()

    def reset(self):
        self.d1 = np.zeros(2 * (self.pade_order + 1))
        self.d2 = np.zeros(self.pade_order * (self.order + 2) + self.pade_order + 1)


@njit(cache=True)
def _mlsa_kernel(x, b, shift, alpha, pd, pade, d1, d2):
    n = x.size
    t_count, width = b.shape
    m = width - 1
    aa = 1.0 - alpha * alpha

    pt2 = pd * (m + 2)
    bn = np.empty(width)
    y = np.empty(n)

    for i in range(n):
        # per-sample coefficient track: linear between frame anchors at
        # t*shift, held at both edges
        p = i / shift
        t0 = int(p)
        if t0 >= t_count - 1:
            for k in range(width):
                bn[k] = b[t_count - 1, k]
        else:
            frac = p - t0
            for k in range(width):
                bn[k] = b[t0, k] + (b[t0 + 1, k] - b[t0, k]) * frac

        acc = x[i] * np.exp(bn[0])

        # basic filter for coefficient b[1]
        out = 0.0
        for j in range(pd, 0, -1):
            d1[j] = aa * d1[pd + j] + alpha * d1[j]
            d1[pd + 1 + j] = d1[j] * bn[1]
            v = d1[pd + 1 + j] * pade[j]
            if j & 1:
                acc += v
            else:
                acc -= v
            out += v
        d1[pd + 1] = acc
        acc = out + acc

        # warped-FIR cascade for coefficients b[2..m]
        out = 0.0
        for j in range(pd, 0, -1):
            base = (j - 1) * (m + 2)
            d2[base] = d2[pt2 + j - 1]
            d2[base + 1] = aa * d2[base] + alpha * d2[base + 1]
            fy = 0.0
            for k in range(2, m + 1):
                d2[base + k] += alpha * (d2[base + k + 1] - d2[base + k - 1])
                fy += d2[base + k] * bn[k]
            for k in range(m + 1, 1, -1):
                d2[base + k] = d2[base + k - 1]
            d2[pt2 + j] = fy
            v = fy * pade[j]
            if j & 1:
                acc += v
            else:
                acc -= v
            out += v
        d2[pt2] = acc
        y[i] = out + acc

    return y


def _run_filter(x: Waveform, mcep: MelCepstrumSequence, negate: bool,
                pade_order: int, tolerance) -> Waveform:
    if pade_order not in _PADE:
        raise ConfigError(f"pade_order must be one of {sorted(_PADE)}, got {pade_order}")
    if x.sample_rate != mcep.sample_rate:
        raise AlignmentError(
            f"waveform rate {x.sample_rate} != feature rate {mcep.sample_rate}"
        )
    shift = int(round(mcep.frame_shift_s * mcep.sample_rate))
    if shift < 1:
        raise ConfigError(f"frame shift rounds to {shift} samples")
    expected = len(mcep) * shift
    tol = max(1024, shift) if tolerance is None else int(tolerance)
    if abs(len(x) - expected) > tol:
        raise AlignmentError(
            f"waveform length {len(x)} vs {len(mcep)} frames * {shift} samples "
            f"= {expected}; mismatch exceeds {tol} samples"
        )
    if len(mcep) == 0:
        return Waveform(np.zeros(0), x.sample_rate)

    cep = -mcep.frames if negate else mcep.frames
    b = mc2b(cep, mcep.alpha)
    spread = np.sum(np.abs(b[:, 1:]), axis=1)
    radius = _STABLE_RADIUS[pade_order]
    if np.any(spread > radius):
        worst = int(np.argmax(spread))
        warnings.warn(
            f"filter coefficients exceed the stable radius {radius} on "
            f"{int(np.sum(spread > radius))} frame(s) (worst {spread[worst]:.2f} "
            f"at frame {worst}); output may be inaccurate",
            RuntimeWarning,
            stacklevel=3,
        )
    b[:, 0] = np.clip(b[:, 0], -_MAX_LOG_GAIN, _MAX_LOG_GAIN)

    state = MlsaFilterState(mcep.order, mcep.alpha, pade_order)
    y = _mlsa_kernel(x.samples, b, shift, mcep.alpha, pade_order,
                     _PADE[pade_order], state.d1, state.d2)
    return Waveform(y, x.sample_rate)


def synthesis_filter(excitation: Waveform, mcep: MelCepstrumSequence,
                     pade_order=5, tolerance=None) -> Waveform:
    """Shape an excitation with the spectral envelope of a frame sequence.

    Output has exactly the input length.  The excitation length must
    agree with frame_count * shift to within one analysis frame
    (override via ``tolerance``, in samples).
    """
    return _run_filter(excitation, mcep, False, pade_order, tolerance)


def inverse_filter(w: Waveform, mcep: MelCepstrumSequence,
                   pade_order=5, tolerance=None) -> Waveform:
    """Remove a spectral envelope, leaving the residual excitation.

    Realized by running the synthesis structure with the negated
    cepstrum, so inverse_filter(synthesis_filter(e)) returns e up to the
    approximation error of the filter.
    """
    return _run_filter(w, mcep, True, pade_order, tolerance)


def reference_vocoder(mcep: MelCepstrumSequence, f0: F0Contour,
                      rate=None, seed=0) -> Waveform:
    """Plain pulse/noise excitation synthesis, for reference renderings.

    Voiced frames get a phase-accumulated pulse train of amplitude
    sqrt(period) (unit mean power); unvoiced frames get unit-variance
    white noise from a generator seeded once per call, so output is
    deterministic for a given seed.  Output length is frames * shift.
    """
    if len(f0) != len(mcep):
        raise AlignmentError(
            f"f0 contour has {len(f0)} frames but features have {len(mcep)}"
        )
    if rate is None:
        rate = mcep.sample_rate
    elif rate != mcep.sample_rate:
        raise AlignmentError(
            f"requested rate {rate} != feature rate {mcep.sample_rate}"
        )
    shift = int(round(mcep.frame_shift_s * rate))
    if shift < 1:
        raise ConfigError(f"frame shift rounds to {shift} samples")
    t_count = len(mcep)
    if t_count == 0:
        return Waveform(np.zeros(0), rate)

    rng = np.random.default_rng(seed)
    excitation = np.zeros(t_count * shift)
    phase = -1.0  # negative marks "no voicing run in progress"
    for t in range(t_count):
        f = f0.values[t]
        seg = slice(t * shift, (t + 1) * shift)
        if f <= 0.0:
            excitation[seg] = rng.standard_normal(shift)
            phase = -1.0
            continue
        step = f / rate
        if phase < 0.0:
            phase = 1.0 - step  # first sample of a run gets a pulse
        ahead = phase + step * np.arange(1, shift + 1)
        fired = np.floor(ahead) > np.floor(ahead - step)
        excitation[seg][fired] = np.sqrt(1.0 / step)
        phase = ahead[-1] % 1.0

    return synthesis_filter(Waveform(excitation, rate), mcep)
