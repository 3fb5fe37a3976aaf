import numpy as np
import pytest
from scipy.stats import chi2, norm

from raremeta.core import DataError
from raremeta.numerics import (
    MAX_MVN_DIM,
    backend_name,
    first_primes,
    liu_tail,
    mixture_chisq_tail,
    mvn_rectangle,
)
from raremeta.numerics import _pykernels


class TestMvnRectangle:
    def test_one_dimensional_matches_normal_cdf(self):
        intervals = [
            (-1.96, 1.96),
            (-1.0, 2.5),
            (0.0, 0.5),
            (-3.7, -0.2),
            (-np.inf, 1.3),
            (0.7, np.inf),
        ]
        for lo, hi in intervals:
            est = mvn_rectangle([lo], [hi], np.eye(1), tol=1e-6)
            want = norm.cdf(hi) - norm.cdf(lo)
            assert est.value == pytest.approx(want, abs=1e-5)

    def test_unbounded_rectangle_is_one(self):
        for dim in (1, 3):
            est = mvn_rectangle(
                [-np.inf] * dim, [np.inf] * dim, np.eye(dim), tol=1e-4
            )
            assert est.value == pytest.approx(1.0, abs=1e-8)

    def test_independent_quadrant(self):
        est = mvn_rectangle([-np.inf, -np.inf], [0.0, 0.0], np.eye(2), tol=1e-5)
        assert est.value == pytest.approx(0.25, abs=1e-4)

    def test_bivariate_known_value(self):
        # Pr(Z1<0, Z2<0) with correlation r is 1/4 + asin(r)/(2*pi).
        r = 0.6
        corr = np.array([[1.0, r], [r, 1.0]])
        want = 0.25 + np.arcsin(r) / (2 * np.pi)
        est = mvn_rectangle([-np.inf, -np.inf], [0.0, 0.0], corr, tol=1e-6)
        assert est.value == pytest.approx(want, abs=2e-5)

    def test_deterministic_given_seed(self):
        corr = np.array([[1.0, 0.5, 0.2], [0.5, 1.0, 0.1], [0.2, 0.1, 1.0]])
        a = mvn_rectangle([-2, -2, -2], [1, 1, 1], corr, tol=1e-5, seed=7)
        b = mvn_rectangle([-2, -2, -2], [1, 1, 1], corr, tol=1e-5, seed=7)
        assert a == b
        c = mvn_rectangle([-2, -2, -2], [1, 1, 1], corr, tol=1e-5, seed=8)
        assert abs(c.value - a.value) < 5 * (a.error + c.error + 1e-12)

    def test_error_estimate_brackets_truth(self):
        # 1-D truth is known; the reported error is 3x the randomization SE.
        est = mvn_rectangle([-1.5], [0.8], np.eye(1), tol=1e-6, seed=3)
        want = norm.cdf(0.8) - norm.cdf(-1.5)
        assert abs(est.value - want) <= max(est.error, 1e-7)

    def test_lower_must_be_below_upper(self):
        with pytest.raises(DataError):
            mvn_rectangle([1.0], [-1.0], np.eye(1))

    def test_dimension_cap(self):
        dim = MAX_MVN_DIM + 1
        with pytest.raises(DataError, match="dimension"):
            mvn_rectangle([-1] * dim, [1] * dim, np.eye(dim))

    def test_non_psd_rejected(self):
        corr = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(DataError, match="positive"):
            mvn_rectangle([-1, -1], [1, 1], corr)

    def test_singular_correlation_is_fine(self):
        # Perfectly correlated pair: rectangle collapses to 1-D.
        corr = np.ones((2, 2))
        est = mvn_rectangle([-1.0, -1.0], [1.0, 1.0], corr, tol=1e-5)
        want = norm.cdf(1.0) - norm.cdf(-1.0)
        assert est.value == pytest.approx(want, abs=1e-4)


class TestMixtureChisqTail:
    def test_single_lambda_matches_chi2(self):
        res = mixture_chisq_tail([1.0], 3.841458820694124)
        assert res.p == pytest.approx(chi2.sf(3.841458820694124, 1), abs=1e-6)
        assert res.method == "davies"

    def test_equal_lambdas_match_chi2_df(self):
        for k in (2, 5):
            q = chi2.isf(0.05, k)
            res = mixture_chisq_tail([1.0] * k, q)
            assert res.p == pytest.approx(0.05, abs=1e-6)

    def test_scale_invariance(self):
        a = mixture_chisq_tail([1.0, 2.0, 0.5], 4.0)
        b = mixture_chisq_tail([10.0, 20.0, 5.0], 40.0)
        assert a.p == pytest.approx(b.p, rel=1e-7)

    def test_q_zero_is_one(self):
        assert mixture_chisq_tail([0.7, 0.3], 0.0).p == 1.0

    def test_negative_q_is_one(self):
        assert mixture_chisq_tail([1.0], -2.0).p == 1.0

    def test_unequal_lambdas_vs_exact_convolution(self):
        # lambda = (2, 1): P(2A + B > q) with A,B ~ chi2_1 has the closed form
        # 2*Phibar(sqrt(q/2))... checked instead against high-resolution
        # numerical integration of the convolution.
        from scipy.integrate import quad

        lam = np.array([2.0, 1.0])
        q = 5.0

        def integrand(x):
            return chi2.pdf(x / 2.0, 1) / 2.0 * chi2.sf(q - x, 1)

        tail_via_conv = quad(integrand, 0, q, epsabs=1e-12)[0] + chi2.sf(q / 2.0, 1)
        res = mixture_chisq_tail(lam, q)
        assert res.p == pytest.approx(tail_via_conv, abs=1e-8)

    def test_liu_fallback_flagged(self):
        # Starve the integrator so it reports a fault and falls back.
        res = mixture_chisq_tail([1.0, 0.5, 0.25], 8.0, lim=2)
        assert res.method == "liu"
        assert res.fault != 0
        assert 0.0 <= res.p <= 1.0

    def test_liu_tail_close_to_davies(self):
        lam = [1.3, 0.9, 0.4, 0.1]
        q = 6.0
        davies = mixture_chisq_tail(lam, q).p
        assert liu_tail(lam, q) == pytest.approx(davies, abs=5e-3)

    def test_lambda_validation(self):
        with pytest.raises(DataError):
            mixture_chisq_tail([], 1.0)
        with pytest.raises(DataError):
            mixture_chisq_tail([0.0, 0.0], 1.0)
        with pytest.raises(DataError):
            mixture_chisq_tail([-1.0, 2.0], 1.0)


def _compiled_kernels():
    try:
        from raremeta.numerics import _ckernels

        return _ckernels
    except ImportError:
        pytest.skip("compiled backend not built")


class TestBackends:
    def test_backend_reports_a_known_name(self):
        assert backend_name() in ("compiled", "python")

    def test_first_primes(self):
        np.testing.assert_array_equal(first_primes(5), [2, 3, 5, 7, 11])
        np.testing.assert_array_equal(first_primes(0), [])

    def test_hwe_kernels_agree(self):
        ck = _compiled_kernels()
        cases = [(5, 10, 85), (2, 0, 0), (50, 25, 25), (0, 3, 97), (12, 40, 3)]
        for het, hom1, hom2 in cases:
            a = ck.hwe_exact(het, hom1, hom2)
            b = _pykernels.hwe_exact(het, hom1, hom2)
            assert a == pytest.approx(b, rel=1e-12)

    def test_davies_kernels_agree(self):
        ck = _compiled_kernels()
        lam = np.ascontiguousarray([1.7, 0.8, 0.3, 0.05])
        for q in (0.5, 3.0, 9.0, 25.0):
            pa, fa = ck.davies_tail(lam, q, 1e-9, 1_000_000)
            pb, fb = _pykernels.davies_tail(lam, q, 1e-9, 1_000_000)
            assert fa == fb == 0
            assert pa == pytest.approx(pb, abs=1e-10)

    def test_genz_kernels_agree(self):
        # Same permuted factor, lattice generators and shifts into both
        # kernels: the lattice sums must agree to rounding error.
        ck = _compiled_kernels()
        from raremeta.numerics import _permuted_scaled_cholesky

        corr = np.array([[1.0, 0.4, 0.1], [0.4, 1.0, -0.3], [0.1, -0.3, 1.0]])
        lo = np.array([-2.0, -1.5, -np.inf])
        hi = np.array([1.0, 2.0, 0.5])
        ch, az, bz = _permuted_scaled_cholesky(corr, lo, hi)
        q = np.sqrt(first_primes(3).astype(np.float64))
        shifts = np.random.default_rng(11).random((10, 3))
        va, ea = ck.genz_lattice(ch, az, bz, q, shifts, 1024)
        vb, eb = _pykernels.genz_lattice(ch, az, bz, q, shifts, 1024)
        assert va == pytest.approx(vb, abs=1e-12)
        assert ea == pytest.approx(eb, abs=1e-12)
