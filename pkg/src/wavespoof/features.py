"""LFCC front end: framed power spectra through a linear triangular
filterbank, log compression, orthonormal DCT, optional log-energy, and
regression deltas. Extractors are looked up by id so alternative front ends
(e.g. a constant-Q variant) can plug in behind the same FeatureMatrix
contract.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, FormatError, InputError
from .waveform import Waveform, index_to_amp

LOG_FLOOR = 1e-12
_CACHE_MAGIC = "FEAT1"


@dataclass(frozen=True)
class LfccConfig:
    frame_len_ms: float = 20.0
    frame_hop_ms: float = 10.0
    fft_size: int = 512
    num_filters: int = 20
    num_ceps: int = 19
    include_energy: bool = True
    delta_window: int = 2

    def __post_init__(self):
        if self.frame_len_ms <= 0 or self.frame_hop_ms <= 0:
            raise InputError("frame sizes must be positive")
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise InputError("fft_size must be a power of two")
        if not 1 <= self.num_ceps <= self.num_filters:
            raise InputError("need 1 <= num_ceps <= num_filters")
        if self.delta_window < 1:
            raise InputError("delta_window must be at least 1")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode("ascii")
        return "lfcc-" + hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class FeatureMatrix:
    """Frame-by-coefficient matrix plus the config fingerprint behind it."""

    frames: np.ndarray
    meta: str = ""

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames)
        if frames.ndim != 2 or frames.size == 0:
            raise InputError("feature matrix must be 2-D and non-empty")
        if not np.all(np.isfinite(frames)):
            raise InputError("feature matrix contains non-finite entries")
        frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def num_coeffs(self) -> int:
        return int(self.frames.shape[1])


def _linear_filterbank(num_filters: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with linearly spaced edges from 0 to Nyquist."""
    bins = fft_size // 2 + 1
    freqs = np.arange(bins) * (sample_rate / fft_size)
    edges = np.linspace(0.0, sample_rate / 2.0, num_filters + 2)
    bank = np.zeros((num_filters, bins))
    for j in range(num_filters):
        left, mid, right = edges[j], edges[j + 1], edges[j + 2]
        rising = (freqs - left) / (mid - left)
        falling = (right - freqs) / (right - mid)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def _regression_delta(m: np.ndarray, window: int) -> np.ndarray:
    padded = np.pad(m, ((window, window), (0, 0)), mode="edge")
    frames = m.shape[0]
    acc = np.zeros_like(m)
    for j in range(1, window + 1):
        acc += j * (padded[window + j : window + j + frames] - padded[window - j : window - j + frames])
    return acc / (2.0 * sum(j * j for j in range(1, window + 1)))


def append_deltas(m: np.ndarray, window: int = 2) -> np.ndarray:
    """Append regression deltas and delta-deltas; output is 3x as wide.

    Edges are handled by replicating the first and last frame, so a constant
    input yields zero deltas and an interior linear ramp yields its slope.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InputError("append_deltas expects a 2-D matrix")
    if window < 1:
        raise InputError("delta window must be at least 1")
    d1 = _regression_delta(m, window)
    d2 = _regression_delta(d1, window)
    return np.concatenate([m, d1, d2], axis=1)


def lfcc(w: Waveform, cfg: LfccConfig | None = None) -> FeatureMatrix:
    """Extract LFCC(+energy) with deltas and delta-deltas.

    Frames are Hamming-windowed, zero-padded to fft_size, and reduced to
    num_filters triangular-filterbank energies on the power spectrum; logs
    are floored at 1e-12 before an orthonormal DCT-II. Output width is
    (num_ceps + energy) * 3.
    """
    if cfg is None:
        cfg = LfccConfig()
    frame_len = int(round(cfg.frame_len_ms * w.sample_rate / 1000.0))
    hop = int(round(cfg.frame_hop_ms * w.sample_rate / 1000.0))
    if frame_len < 2 or hop < 1:
        raise InputError("frame sizes collapse to fewer than 2 samples at this rate")
    if frame_len > cfg.fft_size:
        raise InputError(f"fft_size {cfg.fft_size} is smaller than the {frame_len}-sample frame")
    if len(w) < frame_len:
        raise InputError(f"waveform of {len(w)} samples is shorter than one frame")
    amp = index_to_amp(w.samples)
    frames = sliding_window_view(amp, frame_len)[::hop]
    windowed = frames * np.hamming(frame_len)
    spectrum = np.fft.rfft(windowed, n=cfg.fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    bank = _linear_filterbank(cfg.num_filters, cfg.fft_size, w.sample_rate)
    filterbank_energies = power @ bank.T
    log_energies = np.log(np.maximum(filterbank_energies, LOG_FLOOR))
    ceps = scipy.fft.dct(log_energies, type=2, norm="ortho", axis=1)[:, : cfg.num_ceps]
    columns = [ceps]
    if cfg.include_energy:
        frame_energy = np.log(np.maximum((frames * frames).sum(axis=1), LOG_FLOOR))
        columns.append(frame_energy[:, None])
    static = np.concatenate(columns, axis=1)
    return FeatureMatrix(frames=append_deltas(static, cfg.delta_window), meta=cfg.fingerprint())


def filterbank_log_energies(w: Waveform, cfg: LfccConfig | None = None) -> np.ndarray:
    """Log filterbank energies only (the DCT input), for diagnostics."""
    if cfg is None:
        cfg = LfccConfig()
    frame_len = int(round(cfg.frame_len_ms * w.sample_rate / 1000.0))
    hop = int(round(cfg.frame_hop_ms * w.sample_rate / 1000.0))
    amp = index_to_amp(w.samples)
    frames = sliding_window_view(amp, frame_len)[::hop]
    spectrum = np.fft.rfft(frames * np.hamming(frame_len), n=cfg.fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    bank = _linear_filterbank(cfg.num_filters, cfg.fft_size, w.sample_rate)
    return np.log(np.maximum(power @ bank.T, LOG_FLOOR))


_EXTRACTORS = {}


def register_extractor(name: str, fn) -> None:
    """Register fn(waveform, config) under an extractor id."""
    _EXTRACTORS[name] = fn


def get_extractor(name: str):
    if name not in _EXTRACTORS:
        known = ", ".join(sorted(_EXTRACTORS))
        raise ConfigError(
            f"unknown feature extractor {name!r}; registered extractors: {known}. "
            "Alternative front ends can be added with register_extractor()."
        )
    return _EXTRACTORS[name]


register_extractor("lfcc", lfcc)


def save_features(path, fm: FeatureMatrix) -> None:
    """Cache format: one ASCII header line, then row-major LE float32 data."""
    frames, coeffs = fm.frames.shape
    meta = fm.meta or "-"
    with open(path, "wb") as fh:
        fh.write(f"{_CACHE_MAGIC} {meta} {frames} {coeffs}\n".encode("ascii"))
        fh.write(fm.frames.astype("<f4").tobytes())


def load_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").strip()
        payload = fh.read()
    parts = header.split(" ")
    if len(parts) != 4 or parts[0] != _CACHE_MAGIC:
        raise FormatError(f"{path}: bad feature cache header {header!r}")
    meta = "" if parts[1] == "-" else parts[1]
    try:
        frames, coeffs = int(parts[2]), int(parts[3])
    except ValueError as exc:
        raise FormatError(f"{path}: bad feature cache header {header!r}") from exc
    expected = 4 * frames * coeffs
    if len(payload) != expected:
        raise OSError(f"{path}: truncated feature cache ({len(payload)} of {expected} bytes)")
    data = np.frombuffer(payload, dtype="<f4").reshape(frames, coeffs)
    return FeatureMatrix(frames=data.astype(np.float64), meta=meta)
