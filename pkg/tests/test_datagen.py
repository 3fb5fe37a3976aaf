"""Synthetic data generators: reproducibility, frequency spectrum texture,
LD construction, and phenotype models."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import kstest

from raremeta.core import DataError, GenotypeMatrix
from raremeta.datagen import (
    FixedEffects,
    MixedSigns,
    PhenoModel,
    RandomEffects,
    default_maf_spectrum,
    gen_genotypes,
    gen_ld_genotypes,
    gen_phenotypes,
)

from conftest import make_keys


class TestGenGenotypes:
    def test_shape_and_dosage_values(self):
        g = gen_genotypes(50, 7, seed=1)
        assert g.entries.shape == (50, 7)
        assert set(np.unique(g.entries)) <= {0.0, 1.0, 2.0}

    def test_keys_follow_the_requested_layout(self):
        g = gen_genotypes(5, 3, seed=1, chrom="7", start_pos=500, pos_stride=10)
        assert [(k.chrom, k.pos) for k in g.variants] == [("7", 500), ("7", 510), ("7", 520)]

    def test_deterministic_in_seed(self):
        a = gen_genotypes(30, 10, seed=42)
        b = gen_genotypes(30, 10, seed=42)
        c = gen_genotypes(30, 10, seed=43)
        assert np.array_equal(a.entries, b.entries)
        assert not np.array_equal(a.entries, c.entries)

    def test_custom_spectrum_controls_frequency(self):
        spectrum = lambda rng, size: np.full(size, 0.3)
        g = gen_genotypes(100_000, 1, maf_spectrum=spectrum, seed=5)
        af = g.entries.mean() / 2.0
        se = np.sqrt(0.3 * 0.7 / (2 * 100_000))
        assert af == pytest.approx(0.3, abs=4 * se)

    def test_bad_spectrum_rejected(self):
        with pytest.raises(DataError, match="maf spectrum"):
            gen_genotypes(10, 2, maf_spectrum=lambda rng, size: np.full(size, 0.7))
        with pytest.raises(DataError, match="maf spectrum"):
            gen_genotypes(10, 2, maf_spectrum=lambda rng, size: np.zeros(size + 1))

    def test_size_validation(self):
        with pytest.raises(ValueError):
            gen_genotypes(0, 5)
        with pytest.raises(ValueError):
            gen_genotypes(5, 0)


class TestDefaultSpectrum:
    def test_mostly_rare_with_a_singleton_spike(self, rng):
        n_samples = 1_000
        sample = default_maf_spectrum(n_samples)
        mafs = sample(rng, 20_000)
        floor = 1.0 / (2 * n_samples)
        assert mafs.min() >= floor - 1e-15
        assert mafs.max() <= 0.5
        # ~49% singletons and ~80% under 1% by construction (loose bounds)
        assert 0.45 < np.mean(mafs == floor) < 0.53
        assert 0.75 < np.mean(mafs <= 0.01) < 0.85
        assert np.mean(mafs > 0.01) > 0.15

    def test_rejects_empty_cohort(self):
        with pytest.raises(ValueError):
            default_maf_spectrum(0)


class TestGenLdGenotypes:
    def test_copies_are_nested_in_the_source(self):
        g = gen_ld_genotypes(5_000, 3, seed=2)
        source = g.entries[:, 0]
        for j in range(1, 4):
            assert np.all(g.entries[:, j] <= source)

    def test_copies_correlate_with_the_source(self):
        g = gen_ld_genotypes(20_000, 2, seed=3)
        for j in (1, 2):
            r = np.corrcoef(g.entries[:, 0], g.entries[:, j])[0, 1]
            assert r > 0.05

    def test_copies_are_rare(self):
        g = gen_ld_genotypes(20_000, 3, source_maf=0.2, copy_range=(0.02, 0.08), seed=4)
        copy_afs = g.entries[:, 1:].mean(axis=0) / 2.0
        # copy AF = source_maf * gamma <= 0.2 * 0.08
        assert np.all(copy_afs < 0.02)
        assert g.entries[:, 0].mean() / 2.0 > 0.15

    def test_deterministic(self):
        a = gen_ld_genotypes(100, 2, seed=9)
        b = gen_ld_genotypes(100, 2, seed=9)
        assert np.array_equal(a.entries, b.entries)

    def test_validation(self):
        with pytest.raises(ValueError, match="source_maf"):
            gen_ld_genotypes(10, 1, source_maf=0.9)
        with pytest.raises(ValueError, match="copy_range"):
            gen_ld_genotypes(10, 1, copy_range=(0.5, 0.1))
        with pytest.raises(ValueError):
            gen_ld_genotypes(0, 1)


class TestEffectModels:
    def test_fixed(self, rng):
        assert np.array_equal(FixedEffects(0.25).draw(rng, 3), [0.25, 0.25, 0.25])

    def test_mixed_signs(self, rng):
        draws = MixedSigns(0.5).draw(rng, 2_000)
        assert set(np.unique(np.abs(draws))) == {0.5}
        assert 0.4 < np.mean(draws > 0) < 0.6
        assert np.all(MixedSigns(0.5, fraction_positive=1.0).draw(rng, 50) > 0)
        with pytest.raises(ValueError):
            MixedSigns(0.5, fraction_positive=1.5)

    def test_random_effects(self, rng):
        draws = RandomEffects(mean=1.0, sd=0.0).draw(rng, 5)
        assert np.array_equal(draws, np.ones(5))
        with pytest.raises(ValueError):
            RandomEffects(sd=-1.0)

    def test_pheno_model_validation(self):
        with pytest.raises(ValueError, match="causal_fraction"):
            PhenoModel(0.0, FixedEffects(0.1))
        with pytest.raises(ValueError, match="maf_range"):
            PhenoModel(0.5, FixedEffects(0.1), maf_range=(0.4, 0.1))


class TestGenPhenotypes:
    def test_reconstructable_from_the_seed(self):
        # with explicit causal variants and fixed effects the only randomness
        # is the noise stream, which we can replay
        g = gen_genotypes(200, 6, seed=11)
        model = PhenoModel(0.5, FixedEffects(0.3), seed=77)
        res = gen_phenotypes(g, model, causal_idx=[1, 4])
        noise = np.random.default_rng(77).standard_normal(200)
        expect = g.entries[:, [1, 4]] @ np.full(2, 0.3) + noise
        assert np.array_equal(res.trait, expect)
        assert np.array_equal(res.causal_idx, [1, 4])
        assert np.array_equal(res.effects, [0.3, 0.3])

    def test_deterministic(self):
        g = gen_genotypes(100, 8, seed=1)
        model = PhenoModel(0.4, RandomEffects(sd=0.2), seed=5)
        a = gen_phenotypes(g, model)
        b = gen_phenotypes(g, model)
        assert np.array_equal(a.trait, b.trait)
        assert np.array_equal(a.causal_idx, b.causal_idx)

    def test_null_effects_give_a_standard_normal_trait(self):
        g = gen_genotypes(5_000, 10, seed=3)
        res = gen_phenotypes(g, PhenoModel(0.5, FixedEffects(0.0), seed=8))
        assert kstest(res.trait, "norm").pvalue > 1e-3

    def test_signal_inflates_the_variance(self):
        spectrum = lambda rng, size: np.full(size, 0.4)
        g = gen_genotypes(5_000, 5, maf_spectrum=spectrum, seed=4)
        res = gen_phenotypes(g, PhenoModel(1.0, FixedEffects(1.0), seed=9))
        assert res.trait.var() > 2.0

    def test_maf_range_restricts_the_choice(self):
        spectrum = lambda rng, size: np.array([0.005, 0.3, 0.004, 0.25])
        g = gen_genotypes(4_000, 4, maf_spectrum=spectrum, seed=6)
        model = PhenoModel(1.0, FixedEffects(0.2), maf_range=(0.0, 0.02), seed=10)
        res = gen_phenotypes(g, model)
        assert set(res.causal_idx) <= {0, 2}
        with pytest.raises(DataError, match="causal MAF range"):
            gen_phenotypes(
                g, PhenoModel(1.0, FixedEffects(0.2), maf_range=(0.45, 0.5), seed=10)
            )

    def test_causal_idx_validation(self):
        g = gen_genotypes(50, 3, seed=2)
        model = PhenoModel(0.5, FixedEffects(0.1), seed=1)
        with pytest.raises(DataError, match="out of range"):
            gen_phenotypes(g, model, causal_idx=[5])
        with pytest.raises(DataError, match="empty"):
            gen_phenotypes(g, model, causal_idx=[])

    def test_missing_dosages_use_the_column_mean(self):
        entries = np.array([[0.0, 1.0], [np.nan, 2.0], [2.0, 0.0], [1.0, np.nan]])
        g = GenotypeMatrix(make_keys([100, 200]), entries)
        res = gen_phenotypes(g, PhenoModel(1.0, FixedEffects(0.5), seed=3), causal_idx=[0, 1])
        assert np.isfinite(res.trait).all()
        noise = np.random.default_rng(3).standard_normal(4)
        filled = np.array([[0.0, 1.0], [1.0, 2.0], [2.0, 0.0], [1.0, 1.0]])
        assert np.allclose(res.trait, filled @ [0.5, 0.5] + noise)
