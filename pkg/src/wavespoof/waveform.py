"""16-bit PCM WAV I/O on a 1-based amplitude-index grid.

Samples travel through the toolkit as integer indices k in 1..65536; the
amplitude of index k is -1 + k * 2**-15, so the grid spans (-1, 1] with the
top level at exactly +1.0. Float amplitudes appear only at the I/O boundary
and inside energy computations.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InputError

BASE_BITS = 16
NUM_LEVELS = 1 << BASE_BITS
_HALF_LEVELS = 1 << (BASE_BITS - 1)
# PCM code c in [-32768, 32767] maps to index c + 32769: a bijection onto
# 1..65536 in which code +32767 carries the grid's +1.0 level, so WAV round
# trips are exact at the index level.
_CODE_OFFSET = _HALF_LEVELS + 1


@dataclass(frozen=True)
class Waveform:
    """Mono PCM signal as amplitude indices plus its sample rate."""

    samples: np.ndarray
    sample_rate: int
    source_path: str | None = None

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.int64)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError("waveform requires a non-empty 1-D sample vector")
        if samples.min() < 1 or samples.max() > NUM_LEVELS:
            raise InputError(f"sample indices must lie in 1..{NUM_LEVELS}")
        if int(self.sample_rate) <= 0:
            raise InputError("sample rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)


def amp_to_index(s):
    """Quantize amplitudes in (-1, 1] to indices ceil((s + 1) * 2**15).

    Accepts a scalar or an array and returns the matching shape. Amplitudes
    at or below -1, or above +1, raise InputError.
    """
    arr = np.asarray(s, dtype=np.float64)
    if arr.size and (np.any(arr <= -1.0) or np.any(arr > 1.0)):
        raise InputError("amplitude outside (-1, 1]")
    idx = np.clip(np.ceil((arr + 1.0) * _HALF_LEVELS).astype(np.int64), 1, NUM_LEVELS)
    if arr.ndim == 0:
        return int(idx)
    return idx


def index_to_amp(k):
    """Amplitude of index k: -1 + k * 2**-15. Scalar or array."""
    arr = np.asarray(k, dtype=np.int64)
    if arr.size and (arr.min() < 1 or arr.max() > NUM_LEVELS):
        raise InputError(f"amplitude index outside 1..{NUM_LEVELS}")
    amp = -1.0 + arr * 2.0 ** -(BASE_BITS - 1)
    if arr.ndim == 0:
        return float(amp)
    return amp


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM RIFF/WAVE file into index form."""
    try:
        handle = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise FormatError(f"{path}: not a readable RIFF/WAVE file ({exc})") from exc
    with handle:
        comptype = handle.getcomptype()
        if comptype != "NONE":
            raise FormatError(f"{path}: compressed WAV ({comptype}) is unsupported")
        channels = handle.getnchannels()
        if channels != 1:
            raise FormatError(f"{path}: {channels} channels; only mono is supported")
        width = handle.getsampwidth()
        if width != 2:
            raise FormatError(f"{path}: {8 * width}-bit samples; only 16-bit PCM is supported")
        frames = handle.getnframes()
        if frames == 0:
            raise FormatError(f"{path}: empty waveform")
        rate = handle.getframerate()
        raw = handle.readframes(frames)
    if len(raw) != 2 * frames:
        raise OSError(f"{path}: truncated WAV data ({len(raw)} of {2 * frames} bytes)")
    codes = np.frombuffer(raw, dtype="<i2").astype(np.int64)
    return Waveform(samples=codes + _CODE_OFFSET, sample_rate=rate, source_path=str(path))


def write_wav(path, w: Waveform) -> None:
    """Write a Waveform as mono 16-bit PCM; read_wav inverts it exactly."""
    codes = (w.samples - _CODE_OFFSET).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(w.sample_rate)
        handle.writeframes(codes.tobytes())
