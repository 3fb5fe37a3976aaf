import numpy as np
import pytest
from scipy.stats import chi2

from raremeta.core import DataError, GenotypeMatrix, VariantKey
from raremeta.meta import (
    flip_variant,
    genomic_control_lambda,
    harmonize,
    single_variant_meta,
)
from raremeta.summarize import compute_summary

from conftest import make_block, make_keys, random_study

TWO_SIDED_P_AT_2 = 0.04550026389635842  # 2 * Phi(-2)


class TestHarmonize:
    def test_single_block_identity(self, toy_block):
        res = harmonize([toy_block])
        pooled = res.pooled
        assert pooled.keys == toy_block.keys
        np.testing.assert_array_equal(pooled.scores(), toy_block.scores())
        assert pooled.cov == toy_block.cov
        assert pooled.n_total == toy_block.n_samples
        assert pooled.studies == ("S1",)
        np.testing.assert_array_equal(
            [v.alt_af for v in pooled.variants],
            [v.alt_af for v in toy_block.variants],
        )
        assert res.complete_alignment

    def test_zero_blocks_rejected(self):
        with pytest.raises(DataError, match="harmonize"):
            harmonize([])

    def test_duplicate_study_ids_rejected(self, toy_block):
        with pytest.raises(DataError, match="S1"):
            harmonize([toy_block, toy_block])

    def test_flip_rule(self):
        key_fwd = VariantKey("1", 100, "G", "A")
        key_rev = VariantKey("1", 100, "A", "G")
        a = make_block("A", (key_fwd,), [2.0], [[1.0]], alt_af=[0.1], n_samples=100)
        b = make_block("B", (key_rev,), [3.0], [[1.0]], alt_af=[0.95], n_samples=100)
        res = harmonize([a, b])
        (variant,) = res.pooled.variants
        # Majority is a tie; the first lister (study A) wins, so B flips.
        assert variant.key == key_fwd
        assert variant.score == pytest.approx(2.0 - 3.0)
        assert variant.alt_af == pytest.approx((0.1 * 200 + 0.05 * 200) / 400)
        assert any("flipped" in w for w in res.warnings)

    def test_majority_orientation_wins(self):
        key_fwd = VariantKey("1", 100, "G", "A")
        key_rev = VariantKey("1", 100, "A", "G")
        a = make_block("A", (key_fwd,), [1.0], [[1.0]], alt_af=[0.2])
        b = make_block("B", (key_rev,), [1.0], [[1.0]], alt_af=[0.8])
        c = make_block("C", (key_rev,), [1.0], [[1.0]], alt_af=[0.8])
        res = harmonize([a, b, c])
        (variant,) = res.pooled.variants
        assert variant.key == key_rev
        assert variant.score == pytest.approx(-1.0 + 1.0 + 1.0)

    def test_flip_negates_covariance_row(self):
        keys = make_keys([100, 200])
        flipped0 = (keys[0].flipped(), keys[1])
        cov = [[2.0, 0.5], [0.5, 1.0]]
        a = make_block("A", keys, [1.0, 1.0], cov)
        b = make_block("B", flipped0, [1.0, 1.0], cov)
        c = make_block("C", keys, [1.0, 1.0], cov)
        res = harmonize([a, b, c])
        pooled = res.pooled
        # B's first variant flips: off-diagonal negated, diagonal kept.
        assert pooled.cov.get(0, 0) == pytest.approx(6.0)
        assert pooled.cov.get(0, 1) == pytest.approx(0.5 - 0.5 + 0.5)
        assert pooled.scores()[0] == pytest.approx(1.0 - 1.0 + 1.0)

    def test_disjoint_studies_zero_fill(self):
        ka = make_keys([100])
        kb = make_keys([200])
        a = make_block("A", ka, [2.0], [[1.0]], n_samples=50)
        b = make_block("B", kb, [-1.0], [[2.0]], n_samples=70)
        pooled = harmonize([a, b]).pooled
        assert pooled.keys == ka + kb
        np.testing.assert_array_equal(pooled.scores(), [2.0, -1.0])
        # Cross-study covariance is never synthesized.
        assert pooled.cov.get(0, 1) == 0.0
        assert pooled.variants[0].n_total == 50
        assert pooled.variants[1].n_total == 70
        assert pooled.n_total == 120

    def test_irreconcilable_alleles_excluded(self):
        a = make_block("A", (VariantKey("1", 100, "A", "C"),), [1.0], [[1.0]])
        b = make_block("B", (VariantKey("1", 100, "A", "T"),), [1.0], [[1.0]])
        res = harmonize([a, b])
        assert res.pooled.n_variants == 0
        assert any("irreconcilable" in w for w in res.warnings)

    def test_all_variants_excluded_is_not_an_error(self):
        a = make_block("A", (VariantKey("1", 100, "A", "C"),), [1.0], [[1.0]])
        b = make_block("B", (VariantKey("1", 100, "G", "T"),), [1.0], [[1.0]])
        res = harmonize([a, b])
        assert res.pooled.n_variants == 0
        assert res.warnings

    def test_pooled_af_weighted_by_allele_count(self):
        keys = make_keys([100])
        a = make_block("A", keys, [0.0], [[1.0]], alt_af=[0.1], n_samples=100)
        b = make_block("B", keys, [0.0], [[1.0]], alt_af=[0.4], n_samples=300)
        pooled = harmonize([a, b]).pooled
        assert pooled.variants[0].alt_af == pytest.approx(
            (0.1 * 200 + 0.4 * 600) / 800
        )

    def test_pooled_window_is_minimum(self):
        keys = make_keys([100, 200])
        a = make_block("A", keys, [0.0, 0.0], np.eye(2), window_bp=1_000_000)
        b = make_block("B", keys, [0.0, 0.0], np.eye(2), window_bp=500)
        pooled = harmonize([a, b]).pooled
        assert pooled.window_bp == 500

    def test_associativity(self, rng):
        keys = make_keys([100, 200, 300, 400])
        blocks = []
        for s in range(3):
            blk, _, _ = _random_block(rng, f"S{s}", keys)
            blocks.append(blk)
        all_at_once = harmonize(blocks).pooled
        staged = harmonize([harmonize(blocks[:2]).pooled, blocks[2]]).pooled
        assert staged.keys == all_at_once.keys
        np.testing.assert_allclose(staged.scores(), all_at_once.scores(), rtol=1e-12)
        assert staged.n_total == all_at_once.n_total
        for pair, value in all_at_once.cov.pairs.items():
            assert staged.cov.get(*pair) == pytest.approx(value, rel=1e-12)
        np.testing.assert_allclose(
            [v.alt_af for v in staged.variants],
            [v.alt_af for v in all_at_once.variants],
            rtol=1e-12,
        )

    def test_commutativity(self, rng):
        keys = make_keys([100, 250, 400])
        a, _, _ = _random_block(rng, "A", keys)
        b, _, _ = _random_block(rng, "B", keys[:2])
        ab = harmonize([a, b]).pooled
        ba = harmonize([b, a]).pooled
        assert ab.keys == ba.keys
        np.testing.assert_allclose(ab.scores(), ba.scores(), rtol=1e-12)

    def test_aligned_views_cover_all_studies(self, rng):
        keys = make_keys([100, 200])
        a, _, _ = _random_block(rng, "A", keys)
        b, _, _ = _random_block(rng, "B", keys)
        res = harmonize([a, b])
        assert tuple(s.study_id for s in res.aligned) == ("A", "B")
        for aligned, blk in zip(res.aligned, (a, b)):
            for key in keys:
                assert aligned.scores[key] == blk.scores()[blk.index()[key]]


class TestFlipVariant:
    def test_double_flip_is_identity(self, rng):
        # 2N a power of two makes every allele frequency dyadic, so the
        # complement 1 - af is exact and the round trip is bit-identical.
        keys = make_keys([100, 200, 300])
        geno, y = random_study(rng, 32, keys)
        blk = compute_summary(geno, y, study_id="S1")
        twice = flip_variant(flip_variant(blk, keys[1]), keys[1].flipped())
        assert twice == blk

    def test_double_flip_scores_exact_any_n(self, rng):
        keys = make_keys([100, 200, 300])
        blk, _, _ = _random_block(rng, "S1", keys)
        twice = flip_variant(flip_variant(blk, keys[1]), keys[1].flipped())
        np.testing.assert_array_equal(twice.scores(), blk.scores())
        assert twice.cov == blk.cov
        for a, b in zip(twice.variants, blk.variants):
            assert a.alt_af == pytest.approx(b.alt_af, abs=1e-16)

    def test_flip_changes_orientation(self, toy_block):
        key = toy_block.keys[0]
        flipped = flip_variant(toy_block, key)
        assert flipped.keys[0] == key.flipped()
        assert flipped.variants[0].score == -toy_block.variants[0].score
        assert flipped.variants[0].alt_af == 1.0 - toy_block.variants[0].alt_af
        assert flipped.cov.get(0, 0) == toy_block.cov.get(0, 0)
        assert flipped.cov.get(0, 1) == -toy_block.cov.get(0, 1)

    def test_unknown_key_rejected(self, toy_block):
        with pytest.raises(DataError):
            flip_variant(toy_block, VariantKey("9", 1, "A", "C"))


class TestSingleVariantMeta:
    def test_zero_score(self):
        pooled = harmonize(
            [make_block("S1", make_keys([100]), [0.0], [[4.0]])]
        ).pooled
        (res,) = single_variant_meta(pooled)
        assert res.stat == 0.0
        assert res.p == 1.0

    def test_worked_example(self):
        keys = make_keys([100, 200])
        pooled = harmonize(
            [make_block("S1", keys, [4.0, 0.0], np.diag([4.0, 4.0]))]
        ).pooled
        first, second = single_variant_meta(pooled)
        assert first.stat == pytest.approx(2.0)
        assert first.p == pytest.approx(TWO_SIDED_P_AT_2, rel=1e-12)
        assert first.beta == pytest.approx(1.0)
        assert first.se == pytest.approx(0.5)
        assert second.stat == 0.0
        assert second.p == 1.0

    def test_untestable_variant_flagged(self):
        pooled = harmonize(
            [make_block("S1", make_keys([100]), [0.0], [[0.0]], alt_af=[0.0])]
        ).pooled
        (res,) = single_variant_meta(pooled)
        assert not res.testable
        assert res.stat is None and res.p is None and res.beta is None

    def test_matches_scipy_tail(self, rng):
        keys = make_keys([100])
        blk, _, _ = _random_block(rng, "S1", keys)
        (res,) = single_variant_meta(harmonize([blk]).pooled)
        from scipy.stats import norm

        assert res.p == pytest.approx(2 * norm.sf(abs(res.stat)), rel=1e-12)


class TestGenomicControl:
    def test_calibrated_quantiles(self):
        assert genomic_control_lambda([0.25, 0.5, 0.75]) == pytest.approx(1.0, abs=1e-6)

    def test_all_ones(self):
        assert genomic_control_lambda([1.0, 1.0]) == 0.0

    def test_null_simulation(self, rng):
        p = rng.uniform(size=10_000)
        lam = genomic_control_lambda(p)
        assert 0.9 < lam < 1.1

    def test_inflated_pvalues_give_lambda_above_one(self, rng):
        z = rng.standard_normal(5_000) * 1.3
        p = chi2.sf(z**2, 1)
        assert genomic_control_lambda(p) > 1.2

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            genomic_control_lambda([])


def _random_block(rng, study_id, keys):
    geno, y = random_study(rng, int(rng.integers(20, 60)), keys)
    return compute_summary(geno, y, study_id=study_id), geno, y
