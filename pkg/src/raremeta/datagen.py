"""Synthetic genotype and phenotype generation.

Genotypes are unlinked binomial dosages drawn from a site-frequency spectrum
dominated by rare alleles, plus a helper that manufactures linkage
disequilibrium by "thinning" a common source variant (each carried allele is
copied with some probability, giving nested rare variants positively
correlated with their source).  Phenotypes are Gaussian with additive
genetic effects under one of three effect models.

The spectrum mixture constants below were picked so that roughly 80% of
simulated sites fall under 1% MAF — the texture of deep resequencing data —
while still producing some common variation; they are conventions of this
generator, not estimates of any population's history.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .core import DataError, GenotypeMatrix, VariantKey

#: fraction of sites at singleton scale, log-uniform rare, log-uniform common
SPECTRUM_MIXTURE = {"singleton": 0.49, "rare": 0.31, "common": 0.20}
#: boundary between the "rare" and "common" log-uniform components
RARE_CEILING = 0.01


def default_maf_spectrum(n_samples: int) -> Callable[[np.random.Generator, int], np.ndarray]:
    """Site-frequency sampler for a cohort of ``n_samples`` diploids.

    Singleton-scale sites sit at 1/(2N) (one expected alternate allele);
    the rest are log-uniform on [1/(2N), 1%] and [1%, 50%].
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    floor = 1.0 / (2.0 * n_samples)

    def sample(rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        mafs = np.full(size, floor)
        rare = (u >= SPECTRUM_MIXTURE["singleton"]) & (u < 1.0 - SPECTRUM_MIXTURE["common"])
        common = u >= 1.0 - SPECTRUM_MIXTURE["common"]
        lo = np.log10(min(floor, RARE_CEILING / 2.0))
        mafs[rare] = 10.0 ** rng.uniform(lo, np.log10(RARE_CEILING), rare.sum())
        mafs[common] = 10.0 ** rng.uniform(np.log10(RARE_CEILING), np.log10(0.5), common.sum())
        return mafs

    return sample


def _keys(n: int, chrom: str, start_pos: int, pos_stride: int) -> tuple[VariantKey, ...]:
    return tuple(
        VariantKey(chrom, start_pos + i * pos_stride, "A", "C") for i in range(n)
    )


def gen_genotypes(
    n_samples: int,
    n_variants: int,
    *,
    maf_spectrum: Callable[[np.random.Generator, int], np.ndarray] | None = None,
    seed: int = 0,
    chrom: str = "1",
    start_pos: int = 1_000,
    pos_stride: int = 100,
) -> GenotypeMatrix:
    """Unlinked dosages: column j is Binomial(2, maf_j) per sample."""
    if n_samples < 1 or n_variants < 1:
        raise ValueError("need at least one sample and one variant")
    rng = np.random.default_rng(seed)
    spectrum = maf_spectrum or default_maf_spectrum(n_samples)
    mafs = np.asarray(spectrum(rng, n_variants), dtype=np.float64)
    if mafs.shape != (n_variants,) or np.any(mafs < 0.0) or np.any(mafs > 0.5):
        raise DataError("maf spectrum must return one value in [0, 0.5] per variant")
    entries = rng.binomial(2, mafs[None, :], size=(n_samples, n_variants)).astype(np.float64)
    return GenotypeMatrix(_keys(n_variants, chrom, start_pos, pos_stride), entries)


def gen_ld_genotypes(
    n_samples: int,
    n_copies: int,
    *,
    source_maf: float = 0.2,
    copy_range: tuple[float, float] = (0.02, 0.08),
    seed: int = 0,
    chrom: str = "1",
    start_pos: int = 1_000,
    pos_stride: int = 100,
) -> GenotypeMatrix:
    """A common source variant plus rare variants in LD with it.

    Column 0 is Binomial(2, source_maf).  Each copy keeps every allele the
    source carries independently with probability gamma ~ U(copy_range), so
    the copies are rare, nested within source carriers, and positively
    correlated with the source — the structure that makes an unconditional
    rare-variant test fire off a nearby common signal.
    """
    if n_samples < 1 or n_copies < 1:
        raise ValueError("need at least one sample and one copy")
    if not 0.0 < source_maf <= 0.5:
        raise ValueError("source_maf must lie in (0, 0.5]")
    lo, hi = copy_range
    if not 0.0 < lo <= hi <= 1.0:
        raise ValueError("copy_range must satisfy 0 < lo <= hi <= 1")
    rng = np.random.default_rng(seed)
    source = rng.binomial(2, source_maf, size=n_samples)
    cols = [source.astype(np.float64)]
    gammas = rng.uniform(lo, hi, size=n_copies)
    for g in gammas:
        cols.append(rng.binomial(source, g).astype(np.float64))
    entries = np.column_stack(cols)
    return GenotypeMatrix(_keys(n_copies + 1, chrom, start_pos, pos_stride), entries)


@dataclass(frozen=True)
class FixedEffects:
    """Every causal variant shifts the trait by the same ``delta`` per allele."""

    delta: float

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return np.full(k, float(self.delta))


@dataclass(frozen=True)
class MixedSigns:
    """Effects of magnitude ``delta`` with random sign."""

    delta: float
    fraction_positive: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.fraction_positive <= 1.0:
            raise ValueError("fraction_positive must lie in [0, 1]")

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        signs = np.where(rng.random(k) < self.fraction_positive, 1.0, -1.0)
        return signs * float(self.delta)


@dataclass(frozen=True)
class RandomEffects:
    """Normally distributed effect sizes."""

    mean: float = 0.0
    sd: float = 0.25

    def __post_init__(self):
        if self.sd < 0.0:
            raise ValueError("sd must be non-negative")

    def draw(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size=k)


EffectModel = Union[FixedEffects, MixedSigns, RandomEffects]


@dataclass(frozen=True)
class PhenoModel:
    """How a trait is built from genotypes.

    A fraction of the eligible variants (optionally restricted to a MAF
    range) is causal; effects are in units of the residual standard
    deviation, since the noise is standard normal.
    """

    causal_fraction: float
    effect: EffectModel
    maf_range: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.causal_fraction <= 1.0:
            raise ValueError("causal_fraction must lie in (0, 1]")
        if self.maf_range is not None:
            lo, hi = self.maf_range
            if not 0.0 <= lo <= hi <= 0.5:
                raise ValueError("maf_range must satisfy 0 <= lo <= hi <= 0.5")


class PhenoResult(NamedTuple):
    trait: np.ndarray
    causal_idx: np.ndarray
    effects: np.ndarray


def gen_phenotypes(
    genotypes: GenotypeMatrix,
    model: PhenoModel,
    causal_idx: Sequence[int] | None = None,
) -> PhenoResult:
    """Draw a Gaussian trait with additive effects at the causal variants.

    When ``causal_idx`` is not given, causal variants are sampled from the
    columns whose sample MAF falls in ``model.maf_range``.  Missing dosages
    contribute their column mean.  Returns the trait along with which
    variants were causal and their effects, so simulations can score
    themselves.
    """
    rng = np.random.default_rng(model.seed)
    entries = np.array(genotypes.entries)
    nan_rows, nan_cols = np.nonzero(np.isnan(entries))
    entries[nan_rows, nan_cols] = genotypes.col_means[nan_cols]

    afs = genotypes.col_means / 2.0
    mafs = np.minimum(afs, 1.0 - afs)
    if causal_idx is None:
        if model.maf_range is None:
            eligible = np.arange(genotypes.n_variants)
        else:
            lo, hi = model.maf_range
            eligible = np.nonzero((mafs >= lo) & (mafs <= hi))[0]
        if eligible.size == 0:
            raise DataError("no variants fall inside the causal MAF range")
        k = max(1, int(round(model.causal_fraction * eligible.size)))
        chosen = np.sort(rng.choice(eligible, size=k, replace=False))
    else:
        chosen = np.asarray(sorted(set(causal_idx)), dtype=np.int64)
        if chosen.size == 0:
            raise DataError("causal_idx is empty")
        if chosen.min() < 0 or chosen.max() >= genotypes.n_variants:
            raise DataError("causal_idx out of range")
    effects = model.effect.draw(rng, chosen.size)
    trait = entries[:, chosen] @ effects + rng.standard_normal(genotypes.n_samples)
    return PhenoResult(trait, chosen, effects)
