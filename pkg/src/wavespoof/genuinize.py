"""Quantile matching of waveform amplitude distributions ("genuinization").

Every sample index k of a source file is replaced by the largest target
index q whose cumulative probability does not exceed the source file's
cumulative probability at k. Three variants:

- basic: match the per-file source CDF directly;
- perturbed: refine the source CDF to 2**d sub-levels per index (uniform
  density inside each segment) and dither each sample to a random sub-level,
  which repairs the gaps a strongly peaked source PMF leaves in the output;
- random: like perturbed, but the target is the per-file PMF of a reference
  drawn uniformly from a pool, redrawn for every file.

All randomness is derived from (seed, file ordinal) through named numpy
machinery: SeedSequence([seed, ordinal]).spawn(2) yields the dither stream
(child 0) and the reference-choice stream (child 1), each driving a PCG64
generator. The split keeps a pool of size one bit-identical to the
perturbed variant against that file's CDF.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError, InputError
from .pmf import MAX_EXTENDED_LEVELS, Cdf, cdf_from_pmf, estimate_pmf, _extended_segment_values
from .waveform import Waveform

MODES = ("basic", "perturbed", "random")

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class GenuinizeParams:
    """Mode, dither resolution (extra bits d), and RNG seed.

    mode="basic" ignores extra_bits; the seed fully determines every random
    draw made by the perturbed and random variants.
    """

    mode: str
    extra_bits: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}; got {self.mode!r}")
        if self.extra_bits < 0:
            raise InputError("extra_bits must be non-negative")


def file_streams(seed: int, ordinal: int):
    """Per-file RNG streams (dither, reference choice); see module docstring."""
    root = np.random.SeedSequence(entropy=(seed & _SEED_MASK, int(ordinal)))
    dither_ss, choice_ss = root.spawn(2)
    return np.random.default_rng(dither_ss), np.random.default_rng(choice_ss)


def _match_indices(target_cum: np.ndarray, values: np.ndarray) -> np.ndarray:
    # Largest 1-based q with target_cum[q] <= v; ties (runs of equal
    # cumulative value) resolve to the top of the run. When no q qualifies
    # (v below the first positive-mass bin) fall back to the smallest
    # positive-mass index.
    q = np.searchsorted(target_cum, values, side="right")
    if np.any(q == 0):
        first_positive = int(np.searchsorted(target_cum, 0.0, side="right")) + 1
        q = np.where(q == 0, first_positive, q)
    return q


def _source_distribution(src: Waveform, num_levels: int):
    if int(src.samples.max()) > num_levels:
        raise InputError("source sample index exceeds the target grid")
    p = estimate_pmf([src], num_levels=num_levels)
    return p, cdf_from_pmf(p)


def genuinize_basic(src: Waveform, target: Cdf) -> Waveform:
    """Map src through discrete quantile matching against the target CDF."""
    _, src_cdf = _source_distribution(src, target.num_levels)
    lut = _match_indices(target.cum, src_cdf.cum)
    return Waveform(
        samples=lut[src.samples - 1],
        sample_rate=src.sample_rate,
        source_path=src.source_path,
    )


def _perturbed_with_rng(src: Waveform, target: Cdf, d: int, dither_rng) -> Waveform:
    levels = target.num_levels
    p, src_cdf = _source_distribution(src, levels)
    if d == 0:
        lut = _match_indices(target.cum, src_cdf.cum)
        out = lut[src.samples - 1]
    else:
        if (levels << d) > MAX_EXTENDED_LEVELS:
            raise CapacityError(
                f"extended source CDF would need {levels << d} levels; "
                f"cap is {MAX_EXTENDED_LEVELS}"
            )
        sub = 1 << d
        # Sample n ~ U{0..2**d - 1} sends index k to extended level
        # m = k * 2**d - n, i.e. sub-level i = 2**d - n of segment k.
        noise = dither_rng.integers(0, sub, size=src.samples.size)
        segment_values = _extended_segment_values(src_cdf.cum, p.mass, sub)
        occupied, row_of = np.unique(src.samples, return_inverse=True)
        lut = _match_indices(
            target.cum, segment_values[occupied - 1].reshape(-1)
        ).reshape(occupied.size, sub)
        out = lut[row_of, sub - 1 - noise]
    return Waveform(samples=out, sample_rate=src.sample_rate, source_path=src.source_path)


def genuinize_perturbed(
    src: Waveform, target: Cdf, params: GenuinizeParams, ordinal: int = 0
) -> Waveform:
    """Dithered quantile matching on the 2**d-times finer source grid.

    d=0 reproduces genuinize_basic bit-exactly. ordinal selects the
    per-file RNG stream in batch runs.
    """
    if params.mode != "perturbed":
        raise InputError("genuinize_perturbed requires params.mode='perturbed'")
    dither_rng, _ = file_streams(params.seed, ordinal)
    return _perturbed_with_rng(src, target, params.extra_bits, dither_rng)


def genuinize_random(
    src: Waveform,
    pool,
    params: GenuinizeParams,
    ordinal: int = 0,
    num_levels: int | None = None,
) -> Waveform:
    """Perturbed matching against one reference file drawn from pool.

    The reference is drawn uniformly (from the choice stream) and its
    per-file PMF becomes the target; a new reference is drawn for every
    (seed, ordinal) pair. num_levels sets the target grid (defaults to the
    full 2**16 alphabet).
    """
    if params.mode != "random":
        raise InputError("genuinize_random requires params.mode='random'")
    pool = list(pool)
    if not pool:
        raise ConfigError("reference pool is empty")
    dither_rng, choice_rng = file_streams(params.seed, ordinal)
    reference = pool[int(choice_rng.integers(0, len(pool)))]
    if num_levels is None:
        num_levels = 1 << 16
    target = cdf_from_pmf(estimate_pmf([reference], num_levels=num_levels))
    return _perturbed_with_rng(src, target, params.extra_bits, dither_rng)
