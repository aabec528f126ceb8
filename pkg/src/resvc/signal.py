"""Waveform container, 16-bit PCM WAV I/O, and power utilities.

Amplitudes follow the int16 full-scale convention: a sample value of
32768.0 is full scale.  All downstream defaults (most prominently the
collapse-detection threshold) assume this scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSignalError, FormatError

__all__ = ["Waveform", "read_wav", "write_wav", "power", "match_power"]

_INT16_MIN = -32768
_INT16_MAX = 32767


@dataclass(frozen=True)
class Waveform:
    """Mono audio signal on the int16 amplitude scale.

    Immutable after construction; the sample buffer is set read-only so
    instances are safe to share across threads.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise FormatError(f"waveform samples must be 1-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise FormatError("waveform samples contain NaN or Inf")
        if self.sample_rate <= 0:
            raise FormatError(f"sample_rate must be positive, got {self.sample_rate}")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated WAV file while reading {what}")
    return data


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM RIFF/WAVE file.

    PCM values are converted to float bit-exactly (no rescaling), so a
    write/read round trip is the identity on int16 data.
    """
    with open(path, "rb") as fh:
        riff, _size, wave_id = struct.unpack("<4sI4s", _read_exact(fh, 12, "RIFF header"))
        if riff != b"RIFF":
            raise FormatError(f"{path}: bad chunk id {riff!r}, expected b'RIFF'")
        if wave_id != b"WAVE":
            raise FormatError(f"{path}: bad format id {wave_id!r}, expected b'WAVE'")

        fmt = None
        while True:
            header = fh.read(8)
            if len(header) < 8:
                raise FormatError(f"{path}: no data chunk found")
            chunk_id, chunk_size = struct.unpack("<4sI", header)
            if chunk_id == b"fmt ":
                if chunk_size < 16:
                    raise FormatError(f"{path}: fmt chunk too small ({chunk_size} bytes)")
                body = _read_exact(fh, chunk_size, "fmt chunk")
                fmt = struct.unpack("<HHIIHH", body[:16])
            elif chunk_id == b"data":
                if fmt is None:
                    raise FormatError(f"{path}: data chunk precedes fmt chunk")
                audio_format, channels, rate, _byte_rate, _align, bits = fmt
                if audio_format != 1:
                    raise FormatError(
                        f"{path}: unsupported audio format code {audio_format} (PCM=1 required)"
                    )
                if channels != 1:
                    raise FormatError(f"{path}: unsupported channel count {channels} (mono required)")
                if bits != 16:
                    raise FormatError(f"{path}: unsupported bits per sample {bits} (16 required)")
                raw = _read_exact(fh, chunk_size, "data chunk")
                samples = np.frombuffer(raw, dtype="<i2").astype(np.float64)
                return Waveform(samples, rate)
            else:
                # skip unknown chunks (LIST, fact, ...), honoring RIFF padding
                fh.seek(chunk_size + (chunk_size & 1), 1)


def write_wav(w: Waveform, path) -> None:
    """Write a mono 16-bit PCM RIFF/WAVE file.

    Samples are rounded to nearest (ties to even) and clamped to the
    int16 range before encoding.
    """
    pcm = np.clip(np.rint(w.samples), _INT16_MIN, _INT16_MAX).astype("<i2")
    data = pcm.tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4sI4s", b"RIFF", 36 + len(data), b"WAVE"))
            fh.write(
                struct.pack(
                    "<4sIHHIIHH",
                    b"fmt ",
                    16,
                    1,  # PCM
                    1,  # mono
                    w.sample_rate,
                    w.sample_rate * 2,
                    2,
                    16,
                )
            )
            fh.write(struct.pack("<4sI", b"data", len(data)))
            fh.write(data)
    except OSError as e:
        raise OSError(f"failed to write WAV file {path}: {e}") from e


def power(w: Waveform) -> float:
    """Total signal power: the sum of squared samples."""
    return float(np.dot(w.samples, w.samples))


def match_power(y: Waveform, reference: Waveform) -> Waveform:
    """Scale ``y`` so its power equals the reference's."""
    p_y = power(y)
    if p_y == 0.0:
        raise DegenerateSignalError("cannot match power of an all-zero signal")
    gain = np.sqrt(power(reference) / p_y)
    return Waveform(y.samples * gain, y.sample_rate)
