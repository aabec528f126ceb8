"""End-to-end utterance conversion.

The conversion never synthesizes from scratch: the input waveform is
time-scaled, analyzed, and inverse-filtered; the residual excitation is
pitch-scaled by resampling; converted spectral features then re-filter
that residual.  A conventional pulse/noise rendering of the same
features serves only as the reference for collapse detection, never as
output.

Stages and their trace labels:

  1   time-scale input by the F0 ratio            sig_wx
  2   analyze the time-scaled input               mcp_wx
  3   inverse filter                              res_wx
  4   pitch-scale the residual                    res_y
  5   fit features to the residual length         (mcp_i)
  6a  convert features                            mcp_y
  6b  variance postfilter                         mcp_y_GV
  7a  reference rendering + envelopes             sig_y_W, env_W, env_GV
  7b  filter the residual                         sig_y_GV
  8a  collapse detection                          flagged
  8b  feature substitution on flagged frames      mcp_y_SUB
  9a  re-filter with substituted features         sig_y_SUB
  9b  power-match to the input                    (returned waveform)

With the variance postfilter disabled, stages 7a/8a/8b degenerate:
nothing exaggerates the variance, so nothing is flagged and the
substituted features equal the converted ones.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import collapse as _collapse
from . import convert as _convert
from .analysis import (F0Contour, MelCepstrumSequence, estimate_f0,
                       extract_mcep, interpolate_frames)
from .errors import ConfigError, Error, FormatError, InsufficientDataError
from .f0transform import F0Ratio, f0_transform_residual, wsola
from .mlsa import inverse_filter, reference_vocoder, synthesis_filter
from .signal import Waveform, match_power, write_wav

__all__ = [
    "ConversionConfig",
    "PipelineTrace",
    "convert_utterance",
    "save_mcep",
    "load_mcep",
    "save_stats",
    "load_stats",
    "save_envelope",
    "load_envelope",
    "save_f0",
    "load_f0",
    "write_trace",
]


@dataclass(frozen=True)
class ConversionConfig:
    """Knobs for convert_utterance; defaults suit 22050 Hz speech."""

    f0_ratio: F0Ratio = F0Ratio(1.0)
    mcep_order: int = 35
    alpha: float = 0.455
    frame_shift_s: float = 0.005
    frame_length: int = 1024
    collapse_threshold: float = 10000.0
    slot_length: int = 256
    use_gv: bool = True
    converter_kind: str = "identity"
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.f0_ratio, F0Ratio):
            object.__setattr__(self, "f0_ratio", F0Ratio(float(self.f0_ratio)))
        if self.converter_kind not in ("identity", "meanvar", "external"):
            raise ConfigError(
                f"converter_kind must be identity, meanvar, or external; "
                f"got {self.converter_kind!r}"
            )
        if self.mcep_order < 1:
            raise ConfigError(f"mcep_order must be >= 1, got {self.mcep_order}")


@dataclass
class PipelineTrace:
    """Intermediate products of one conversion, for inspection and dumps."""

    sig_wx: Waveform = None
    res_wx: Waveform = None
    res_y: Waveform = None
    mcp_wx: MelCepstrumSequence = None
    mcp_y: MelCepstrumSequence = None
    mcp_y_gv: MelCepstrumSequence = None
    mcp_y_sub: MelCepstrumSequence = None
    env_w: _collapse.EnvelopeSignal = None
    env_gv: _collapse.EnvelopeSignal = None
    flagged: set = field(default_factory=set)
    sig_y_w: Waveform = None
    sig_y_gv: Waveform = None
    sig_y_sub: Waveform = None


@contextmanager
def _stage(name):
    # failures deep in a stage get labeled with where the pipeline was
    try:
        yield
    except Error as e:
        head = e.args[0] if e.args else ""
        e.args = (f"[{name}] {head}",) + e.args[1:]
        raise


def _fit_contour(f0: F0Contour, count: int, frame_shift_s: float) -> F0Contour:
    """Resample a contour to ``count`` frames by nearest index.

    Nearest-index keeps voicing decisions crisp; interpolating across a
    voiced/unvoiced edge would fabricate out-of-range values.
    """
    v = f0.values
    if v.size == 0 or count == 0:
        return F0Contour(np.zeros(count), frame_shift_s)
    idx = np.rint(np.linspace(0.0, v.size - 1.0, count)).astype(np.intp)
    return F0Contour(v[idx], frame_shift_s)


def convert_utterance(x: Waveform, cfg: ConversionConfig, converter,
                      src_stats=None, tgt_stats=None, f0: F0Contour = None):
    """Convert one utterance; returns (waveform, trace).

    ``converter`` is any callable mapping a MelCepstrumSequence to a
    same-shape one (see the convert module for the stock ones).  Speaker
    statistics are needed only on the variance-postfilter path: the
    target's gv drives the postfilter and both speakers' log-F0 stats
    shape the reference rendering's pitch contour.  ``f0`` overrides the
    built-in estimate of the input's contour.
    """
    if len(x) == 0:
        raise ConfigError("input waveform is empty")
    if cfg.use_gv and (src_stats is None or tgt_stats is None):
        raise ConfigError(
            "the variance postfilter path needs source and target statistics; "
            "pass both or disable use_gv"
        )
    r = cfg.f0_ratio.value
    shift = int(round(cfg.frame_shift_s * x.sample_rate))
    if shift < 1:
        raise ConfigError(f"frame shift rounds to {shift} samples at {x.sample_rate} Hz")

    trace = PipelineTrace()

    with _stage("1:time-scale"):
        trace.sig_wx = wsola(x, cfg.f0_ratio)
    with _stage("2:analyze"):
        trace.mcp_wx = extract_mcep(trace.sig_wx, cfg.mcep_order, cfg.alpha,
                                    cfg.frame_shift_s, cfg.frame_length)
    with _stage("3:inverse-filter"):
        trace.res_wx = inverse_filter(trace.sig_wx, trace.mcp_wx)
    with _stage("4:pitch-scale"):
        trace.res_y = f0_transform_residual(trace.res_wx, cfg.f0_ratio)

    with _stage("5:fit-frames"):
        if len(trace.res_y) == 0:
            raise InsufficientDataError("pitch-scaled residual is empty")
        t_out = int(round(len(trace.res_y) / shift))
        # The features were measured on sig_wx, whose timeline runs
        # len(sig_wx)/len(res_y) times slower than the residual's.  Frames
        # exist only where a full analysis window fit, so first extend the
        # sequence (holding the last frame) to cover the whole signal;
        # resampling the frame axis without that extension skews the
        # coefficient timeline against the residual and the reconstruction
        # error swamps everything else.
        scale = len(trace.sig_wx) / len(trace.res_y)
        k = int(round((t_out - 1) * scale)) + 1
        mc = trace.mcp_wx
        if k > len(mc):
            pad = np.repeat(mc.frames[-1:], k - len(mc), axis=0)
            mc = MelCepstrumSequence(np.vstack([mc.frames, pad]), mc.alpha,
                                     mc.frame_shift_s, mc.sample_rate)
        mcp_i = interpolate_frames(mc, t_out)
    with _stage("6a:convert"):
        trace.mcp_y = converter(mcp_i)
        if trace.mcp_y.frames.shape != mcp_i.frames.shape:
            raise ConfigError(
                f"converter changed the frame shape: {mcp_i.frames.shape} -> "
                f"{trace.mcp_y.frames.shape}"
            )
    with _stage("6b:variance-postfilter"):
        if cfg.use_gv:
            trace.mcp_y_gv = _convert.gv_postfilter(trace.mcp_y, tgt_stats.gv)
        else:
            trace.mcp_y_gv = trace.mcp_y

    with _stage("7b:filter"):
        trace.sig_y_gv = synthesis_filter(trace.res_y, trace.mcp_y_gv)

    if cfg.use_gv:
        with _stage("7a:reference-render"):
            if f0 is None:
                f0 = estimate_f0(x, frame_shift_s=cfg.frame_shift_s)
            f0_y = _fit_contour(_convert.convert_f0(f0, src_stats, tgt_stats),
                                t_out, cfg.frame_shift_s)
            rendered = reference_vocoder(trace.mcp_y_gv, f0_y, seed=cfg.seed)
            # the pulse/noise excitation has unit power where the residual
            # does not; put both renderings on one scale before comparing
            trace.sig_y_w = match_power(rendered, trace.sig_y_gv)
        with _stage("8a:collapse-detect"):
            trace.env_w = _collapse.extract_envelope(trace.sig_y_w, cfg.slot_length)
            trace.env_gv = _collapse.extract_envelope(trace.sig_y_gv, cfg.slot_length)
            trace.flagged = _collapse.detect_collapsed_frames(
                trace.env_w, trace.env_gv, cfg.collapse_threshold, shift, t_out)
        with _stage("8b:substitute"):
            trace.mcp_y_sub = _collapse.substitute_features(
                trace.mcp_y_gv, trace.mcp_y, trace.flagged)
        with _stage("9a:refilter"):
            if trace.flagged:
                trace.sig_y_sub = synthesis_filter(trace.res_y, trace.mcp_y_sub)
            else:
                trace.sig_y_sub = trace.sig_y_gv
    else:
        trace.flagged = set()
        trace.mcp_y_sub = trace.mcp_y
        trace.sig_y_sub = trace.sig_y_gv

    with _stage("9b:power-match"):
        out = match_power(trace.sig_y_sub, x)
    return out, trace


# ---------------------------------------------------------------------------
# file formats

_MCEP_MAGIC = b"MCEP1"


def save_mcep(mcep: MelCepstrumSequence, path) -> None:
    """Write a feature sequence in the MCEP1 binary layout.

    Header: magic "MCEP1", u32 frame count, u32 coefficients per frame,
    f64 alpha, f64 frame shift in seconds; then the frames, row-major,
    little-endian f32.
    """
    frames = mcep.frames
    with open(path, "wb") as fh:
        fh.write(_MCEP_MAGIC)
        fh.write(struct.pack("<IIdd", frames.shape[0], frames.shape[1],
                             mcep.alpha, mcep.frame_shift_s))
        fh.write(frames.astype("<f4").tobytes())


def load_mcep(path, sample_rate) -> MelCepstrumSequence:
    """Read an MCEP1 file; the sample rate is supplied by the caller.

    The format stores the frame shift in seconds, so the rate is
    whatever signal the features are to be used with.
    """
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != _MCEP_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {_MCEP_MAGIC!r}")
        header = fh.read(24)
        if len(header) != 24:
            raise FormatError(f"{path}: truncated header")
        count, width, alpha, shift_s = struct.unpack("<IIdd", header)
        body = fh.read()
    expected = count * width * 4
    if len(body) != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes of frame data, got {len(body)}"
        )
    frames = np.frombuffer(body, dtype="<f4").astype(np.float64)
    return MelCepstrumSequence(frames.reshape(count, width), alpha, shift_s,
                               sample_rate)


def save_stats(stats: _convert.SpeakerStats, path) -> None:
    """Write speaker statistics as `key = value` text, one key per line."""
    def vec(v):
        return " ".join(f"{x:.17g}" for x in v)

    with open(path, "w") as fh:
        fh.write(f"logf0_mean = {stats.logf0_mean:.17g}\n")
        fh.write(f"logf0_var = {stats.logf0_var:.17g}\n")
        fh.write(f"mcep_mean = {vec(stats.mcep_mean)}\n")
        fh.write(f"mcep_var = {vec(stats.mcep_var)}\n")
        fh.write(f"gv = {vec(stats.gv)}\n")


def load_stats(path) -> _convert.SpeakerStats:
    fields = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected `key = value`")
            key, _, value = line.partition("=")
            key = key.strip()
            if key in fields:
                raise FormatError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                fields[key] = np.array([float(tok) for tok in value.split()])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: bad number in {key!r}: {e}") from e
    required = ("logf0_mean", "logf0_var", "mcep_mean", "mcep_var", "gv")
    for key in required:
        if key not in fields:
            raise FormatError(f"{path}: missing key {key!r}")
    for key in fields:
        if key not in required:
            raise FormatError(f"{path}: unknown key {key!r}")
    for key in ("logf0_mean", "logf0_var"):
        if fields[key].size != 1:
            raise FormatError(f"{path}: {key} must be a single number")
    return _convert.SpeakerStats(
        logf0_mean=float(fields["logf0_mean"][0]),
        logf0_var=float(fields["logf0_var"][0]),
        mcep_mean=fields["mcep_mean"],
        mcep_var=fields["mcep_var"],
        gv=fields["gv"],
    )


def save_envelope(env: _collapse.EnvelopeSignal, path) -> None:
    """Write an envelope as two-column text: sample index, value."""
    with open(path, "w") as fh:
        for i, v in enumerate(env.values):
            fh.write(f"{i} {v:.17g}\n")


def load_envelope(path, sample_rate, slot_length) -> _collapse.EnvelopeSignal:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected two columns")
            try:
                idx, val = int(parts[0]), float(parts[1])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
            if idx != len(values):
                raise FormatError(
                    f"{path}:{lineno}: index {idx} out of order (expected {len(values)})"
                )
            values.append(val)
    return _collapse.EnvelopeSignal(np.array(values), sample_rate, slot_length)


def save_f0(f0: F0Contour, path) -> None:
    """Write an F0 contour as one value per line (0 marks unvoiced)."""
    with open(path, "w") as fh:
        for v in f0.values:
            fh.write(f"{v:.17g}\n")


def load_f0(path, frame_shift_s) -> F0Contour:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: {e}") from e
    return F0Contour(np.array(values), frame_shift_s)


def write_trace(trace: PipelineTrace, directory) -> None:
    """Dump every populated trace member into a directory.

    Signals go out as WAV, residuals as .npy (they are unit-scale and
    would quantize to nothing as 16-bit), features as MCEP1, envelopes
    as two-column text, flagged frames as one sorted index per line.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    wavs = {"sig_wx": trace.sig_wx, "sig_y_W": trace.sig_y_w,
            "sig_y_GV": trace.sig_y_gv, "sig_y_SUB": trace.sig_y_sub}
    for name, w in wavs.items():
        if w is not None:
            write_wav(w, d / f"{name}.wav")
    for name, w in (("res_wx", trace.res_wx), ("res_y", trace.res_y)):
        if w is not None:
            np.save(d / f"{name}.npy", w.samples)
    mceps = {"mcp_wx": trace.mcp_wx, "mcp_y": trace.mcp_y,
             "mcp_y_GV": trace.mcp_y_gv, "mcp_y_SUB": trace.mcp_y_sub}
    for name, mc in mceps.items():
        if mc is not None:
            save_mcep(mc, d / f"{name}.mcp")
    for name, env in (("env_W", trace.env_w), ("env_GV", trace.env_gv)):
        if env is not None:
            save_envelope(env, d / f"{name}.txt")
    with open(d / "flagged.txt", "w") as fh:
        for idx in sorted(int(t) for t in trace.flagged):
            fh.write(f"{idx}\n")
