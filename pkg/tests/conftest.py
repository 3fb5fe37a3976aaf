from __future__ import annotations

import numpy as np
import pytest

from raremeta.core import (
    BandedMatrix,
    GenotypeMatrix,
    SummaryBlock,
    VariantKey,
    VariantSummary,
)
from raremeta.meta import harmonize
from raremeta.summarize import compute_summary


def make_keys(positions, chrom="1", ref="A", alt="C"):
    return tuple(VariantKey(chrom, int(p), ref, alt) for p in positions)


def make_block(
    study_id,
    keys,
    scores,
    cov,
    *,
    n_samples=100,
    alt_af=None,
    trait_mean=0.0,
    trait_var=1.0,
    window_bp=1_000_000,
):
    """Hand-build a SummaryBlock from a dense covariance matrix."""
    keys = tuple(keys)
    cov = np.asarray(cov, dtype=float)
    j = len(keys)
    if alt_af is None:
        alt_af = [0.1] * j
    variants = tuple(
        VariantSummary(
            key=keys[i],
            n_informative=n_samples,
            alt_af=float(alt_af[i]),
            call_rate=1.0,
            hwe_p=1.0,
            score=float(scores[i]),
        )
        for i in range(j)
    )
    pairs = {}
    for a in range(j):
        for b in range(a, j):
            if abs(keys[a].pos - keys[b].pos) < window_bp and keys[a].chrom == keys[b].chrom:
                pairs[(a, b)] = float(cov[a, b])
    banded = BandedMatrix(j, pairs)
    return SummaryBlock(
        study_id=study_id,
        n_samples=n_samples,
        trait_mean=trait_mean,
        trait_var=trait_var,
        variants=variants,
        cov=banded,
        window_bp=window_bp,
    )


def make_pooled(keys, scores, cov, **kwargs):
    """MetaScoreSet wrapping a single hand-built block."""
    return harmonize([make_block("S1", keys, scores, cov, **kwargs)]).pooled


def random_psd(rng, j, rank=None):
    a = rng.standard_normal((rank or j + 1, j))
    return a.T @ a


def random_study(rng, n, keys, *, maf_low=0.05, maf_high=0.5):
    """Random genotypes (no monomorphic columns) plus a noise trait."""
    j = len(keys)
    while True:
        geno = rng.binomial(2, rng.uniform(maf_low, maf_high, j), size=(n, j)).astype(float)
        if (geno.std(axis=0) > 0).all():
            break
    y = rng.standard_normal(n)
    return GenotypeMatrix(tuple(keys), geno), y


def summary_of(rng, study_id, n, keys, window_bp=1_000_000):
    geno, y = random_study(rng, n, keys)
    return compute_summary(geno, y, study_id=study_id, window_bp=window_bp), geno, y


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)


@pytest.fixture
def toy_block():
    """The worked 4-sample, 2-variant example used across modules."""
    keys = make_keys([100, 200])
    keys = (keys[0], VariantKey("1", 200, "A", "G"))
    geno = GenotypeMatrix(keys, np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0], [2.0, 1.0]]))
    return compute_summary(geno, [1.0, -1.0, 0.5, -0.5], study_id="S1")
