"""Amplitude PMFs and CDFs: estimation, refinement to finer grids, distances,
and the on-disk formats used by the CLI.

Count-backed PMFs keep their integer histograms, so cumulative sums stay
exact rationals until the final division. PMFs that arrive without counts
(for example loaded from a file) fall back to compensated summation, which
keeps 65536-term prefix sums well inside the 1e-9 tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, FormatError, InputError
from .waveform import NUM_LEVELS

PROB_TOL = 1e-9
# Cap on len(cum) for extended CDFs; 2**16 base levels with d=10 extra bits.
MAX_EXTENDED_LEVELS = 1 << 26

_GPMF_MAGIC = b"GPMF"
_GPMF_VERSION = 1
_CSV_HEADER = "index,probability"


@dataclass(frozen=True)
class Pmf:
    """Probability mass over amplitude indices 1..len(mass).

    total_count is the number of samples behind the estimate (0 when
    unknown); counts is the integer histogram when the PMF came from data.
    """

    mass: np.ndarray
    total_count: int = 0
    counts: np.ndarray | None = None

    def __post_init__(self):
        mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        if mass.ndim != 1 or mass.size == 0:
            raise InputError("PMF mass must be a non-empty 1-D vector")
        if mass.min() < 0.0:
            raise InputError("PMF mass must be non-negative")
        if abs(float(mass.sum()) - 1.0) > PROB_TOL:
            raise InputError("PMF mass must sum to 1 within 1e-9")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "total_count", int(self.total_count))
        if self.counts is not None:
            counts = np.ascontiguousarray(self.counts, dtype=np.int64)
            if counts.shape != mass.shape:
                raise InputError("histogram counts must match the PMF length")
            if int(counts.sum()) != self.total_count:
                raise InputError("histogram counts inconsistent with total_count")
            counts.setflags(write=False)
            object.__setattr__(self, "counts", counts)

    @property
    def num_levels(self) -> int:
        return int(self.mass.size)


@dataclass(frozen=True)
class Cdf:
    """Cumulative distribution over the same 1-based index grid as Pmf."""

    cum: np.ndarray

    def __post_init__(self):
        cum = np.ascontiguousarray(self.cum, dtype=np.float64)
        if cum.ndim != 1 or cum.size == 0:
            raise InputError("CDF must be a non-empty 1-D vector")
        if cum.size > 1 and np.any(np.diff(cum) < 0.0):
            raise InputError("CDF must be non-decreasing")
        if abs(float(cum[-1]) - 1.0) > PROB_TOL:
            raise InputError("CDF must end at 1 within 1e-9")
        cum.setflags(write=False)
        object.__setattr__(self, "cum", cum)

    @property
    def num_levels(self) -> int:
        return int(self.cum.size)


@dataclass(frozen=True)
class ExtendedCdf:
    """CDF refined to 2**extra_bits sub-levels per base index."""

    cum: np.ndarray
    base_bits: int
    extra_bits: int

    def __post_init__(self):
        cum = np.ascontiguousarray(self.cum, dtype=np.float64)
        expected = 1 << (self.base_bits + self.extra_bits)
        if cum.ndim != 1 or cum.size != expected:
            raise InputError("extended CDF length must be 2**(base_bits + extra_bits)")
        cum.setflags(write=False)
        object.__setattr__(self, "cum", cum)

    @property
    def num_levels(self) -> int:
        return int(self.cum.size)


def estimate_pmf(waveforms, masks=None, keep="all", num_levels=NUM_LEVELS) -> Pmf:
    """Pool one or more waveforms into a PMF over num_levels indices.

    masks, when given, supplies one VadMask (or boolean array) per waveform;
    keep selects which samples enter the histogram: "speech", "nonspeech",
    or "all". Estimation is pure integer counting until the final division.
    """
    if keep not in ("speech", "nonspeech", "all"):
        raise InputError(f"keep must be speech, nonspeech, or all; got {keep!r}")
    if keep != "all" and masks is None:
        raise InputError(f"keep={keep!r} requires per-waveform masks")
    if num_levels < 1:
        raise InputError("num_levels must be positive")
    waveforms = list(waveforms)
    if masks is not None:
        masks = list(masks)
        if len(masks) != len(waveforms):
            raise InputError("need exactly one mask per waveform")
    counts = np.zeros(num_levels, dtype=np.int64)
    for pos, w in enumerate(waveforms):
        samples = w.samples
        if keep != "all":
            flags = np.asarray(getattr(masks[pos], "speech", masks[pos]), dtype=bool)
            if flags.size != samples.size:
                raise InputError("mask length must match the waveform length")
            samples = samples[flags] if keep == "speech" else samples[~flags]
        if samples.size == 0:
            continue
        if int(samples.max()) > num_levels:
            raise InputError(f"sample index exceeds the {num_levels}-level grid")
        counts += np.bincount(samples - 1, minlength=num_levels)
    total = int(counts.sum())
    if total == 0:
        raise InputError("no samples retained for PMF estimation")
    return Pmf(mass=counts / total, total_count=total, counts=counts)


def _kahan_cumsum(values: np.ndarray) -> np.ndarray:
    # Running compensated summation; plain cumsum would be fine at 1e-9 but
    # this keeps the drift independent of the level count.
    out = np.empty(values.size, dtype=np.float64)
    total = 0.0
    carry = 0.0
    for pos, value in enumerate(values.tolist()):
        adjusted = value - carry
        new_total = total + adjusted
        carry = (new_total - total) - adjusted
        total = new_total
        out[pos] = total
    return out


def cdf_from_pmf(p: Pmf) -> Cdf:
    """Cumulative form of a PMF.

    Count-backed PMFs use exact integer prefix sums divided once at the end;
    float-only PMFs use Kahan-compensated running summation.
    """
    if p.counts is not None and p.total_count > 0:
        cum = np.cumsum(p.counts, dtype=np.int64) / p.total_count
    else:
        cum = _kahan_cumsum(p.mass)
    return Cdf(cum=cum)


def _extended_segment_values(cum: np.ndarray, mass: np.ndarray, sub_levels: int) -> np.ndarray:
    # Uniform density inside each base segment. The segment-end column is
    # pinned to the base CDF so boundaries agree exactly, and the interior is
    # clipped against it so the flattened vector stays monotone.
    base = np.concatenate(([0.0], cum[:-1]))
    frac = np.arange(1, sub_levels + 1) / sub_levels
    vals = np.minimum(base[:, None] + frac[None, :] * mass[:, None], cum[:, None])
    vals[:, -1] = cum
    return vals


def extend_cdf(p: Pmf, d: int, max_levels: int = MAX_EXTENDED_LEVELS) -> ExtendedCdf:
    """Refine the CDF of p to 2**d sub-levels per index.

    Sub-level i of segment k (i in 1..2**d) takes the value
    F(k-1) + (i / 2**d) * mass[k], i.e. the mass of each segment is spread
    uniformly across its sub-levels. d=0 returns the base CDF verbatim.
    """
    if d < 0:
        raise InputError("extra bits d must be non-negative")
    levels = p.num_levels
    if levels & (levels - 1):
        raise InputError("extend_cdf requires a power-of-two level count")
    base_bits = levels.bit_length() - 1
    base = cdf_from_pmf(p)
    if d == 0:
        return ExtendedCdf(cum=base.cum.copy(), base_bits=base_bits, extra_bits=0)
    if (levels << d) > max_levels:
        raise CapacityError(
            f"extended CDF would need {levels << d} levels; cap is {max_levels}"
        )
    vals = _extended_segment_values(base.cum, p.mass, 1 << d)
    return ExtendedCdf(cum=vals.reshape(-1), base_bits=base_bits, extra_bits=d)


def tv_distance(a, b) -> float:
    """Total variation distance 0.5 * sum(|a - b|) between two mass vectors.

    Accepts Pmf instances or plain arrays of equal length.
    """
    mass_a = np.asarray(getattr(a, "mass", a), dtype=np.float64)
    mass_b = np.asarray(getattr(b, "mass", b), dtype=np.float64)
    if mass_a.shape != mass_b.shape:
        raise InputError("TV distance requires equally sized mass vectors")
    return 0.5 * float(np.abs(mass_a - mass_b).sum())


def save_pmf_csv(path, p: Pmf) -> None:
    """Write `index,probability` rows for the non-zero bins only."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(_CSV_HEADER + "\n")
        for pos in np.flatnonzero(p.mass):
            fh.write(f"{pos + 1},{float(p.mass[pos])!r}\n")


def load_pmf_csv(path, num_levels=NUM_LEVELS) -> Pmf:
    with open(path, "r", encoding="ascii", newline="") as fh:
        header = fh.readline().strip()
        if header != _CSV_HEADER:
            raise FormatError(f"{path}: expected header {_CSV_HEADER!r}, got {header!r}")
        mass = np.zeros(num_levels, dtype=np.float64)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                index_text, prob_text = line.split(",")
                index = int(index_text)
                prob = float(prob_text)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: malformed row {line!r}") from exc
            if not 1 <= index <= num_levels:
                raise FormatError(f"{path}:{lineno}: index {index} outside 1..{num_levels}")
            mass[index - 1] = prob
    return Pmf(mass=mass)


def save_pmf_binary(path, p: Pmf) -> None:
    """Binary container: magic GPMF, version byte, D byte, 2**D LE doubles."""
    levels = p.num_levels
    if levels & (levels - 1):
        raise InputError("binary PMF files require a power-of-two level count")
    bits = levels.bit_length() - 1
    with open(path, "wb") as fh:
        fh.write(_GPMF_MAGIC)
        fh.write(bytes((_GPMF_VERSION, bits)))
        fh.write(p.mass.astype("<f8").tobytes())


def load_pmf_binary(path) -> Pmf:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _GPMF_MAGIC:
        raise FormatError(f"{path}: missing GPMF magic")
    if len(blob) < 6:
        raise FormatError(f"{path}: truncated GPMF header")
    version, bits = blob[4], blob[5]
    if version != _GPMF_VERSION:
        raise FormatError(f"{path}: unsupported GPMF version {version}")
    levels = 1 << bits
    expected = 6 + 8 * levels
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    mass = np.frombuffer(blob, dtype="<f8", offset=6).astype(np.float64)
    return Pmf(mass=mass)


def save_pmf(path, p: Pmf) -> None:
    """Write CSV when the path ends in .csv, the binary container otherwise."""
    if str(path).lower().endswith(".csv"):
        save_pmf_csv(path, p)
    else:
        save_pmf_binary(path, p)


def load_pmf(path, num_levels=NUM_LEVELS) -> Pmf:
    """Load either PMF format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == _GPMF_MAGIC:
        return load_pmf_binary(path)
    return load_pmf_csv(path, num_levels=num_levels)
