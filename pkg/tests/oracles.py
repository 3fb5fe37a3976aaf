"""Independent reference implementations used as ground truth by the tests.

Everything here is written the slow, obvious way (explicit loops, exact
rational arithmetic where it matters) and deliberately shares no code with
the package under test.
"""
from __future__ import annotations

from fractions import Fraction
import math

import numpy as np
from scipy.stats import norm


def score_cov_brute_force(entries, residuals, positions, window_bp):
    """Naive double-loop version of the per-study summary statistics.

    Returns (u, v_pairs, alt_af, sigma2) where v_pairs maps (i, j) with
    i <= j to the covariance entry, storing only in-window pairs.
    """
    x = np.asarray(entries, dtype=float)
    y = np.asarray(residuals, dtype=float)
    n, j = x.shape
    mu = sum(y) / n
    sigma2 = sum((yi - mu) ** 2 for yi in y) / n
    col_means = [sum(x[i, c] for i in range(n)) / n for c in range(j)]
    u = []
    for c in range(j):
        u.append(sum((x[i, c] - col_means[c]) * y[i] for i in range(n)))
    v_pairs = {}
    for a in range(j):
        for b in range(a, j):
            if a != b and abs(positions[a] - positions[b]) >= window_bp:
                continue
            acc = 0.0
            for i in range(n):
                acc += (x[i, a] - col_means[a]) * (x[i, b] - col_means[b])
            v_pairs[(a, b)] = sigma2 * acc
    af = [sum(x[i, c] for i in range(n)) / (2 * n) for c in range(j)]
    return np.array(u), v_pairs, np.array(af), sigma2


def hwe_enumeration(n_ref_hom, n_het, n_alt_hom):
    """Exact two-sided HWE test by enumerating all tables with fixed margins.

    Uses Fraction arithmetic throughout, so the only rounding is the final
    float conversion.
    """
    n = n_ref_hom + n_het + n_alt_hom
    if n == 0:
        return 1.0
    n_alt = n_het + 2 * n_alt_hom
    n_minor = min(n_alt, 2 * n - n_alt)
    if n_minor == 0:
        return 1.0

    def table_prob(het):
        # Pr(het | allele counts) ∝ N! / (aa! ab! bb!) * 2^het with
        # aa, bb implied by fixed margins.
        rare_hom = (n_minor - het) // 2
        common_hom = n - het - rare_hom
        num = Fraction(math.factorial(n) * 2**het)
        den = Fraction(
            math.factorial(rare_hom)
            * math.factorial(het)
            * math.factorial(common_hom)
        )
        return num / den

    hets = [h for h in range(n_minor % 2, n_minor + 1, 2)]
    probs = {h: table_prob(h) for h in hets}
    total = sum(probs.values())
    observed = probs[n_het] / total
    p = sum(pr / total for pr in probs.values() if pr / total <= observed)
    return float(min(p, Fraction(1)))


def ols_residuals_normal_equations(y, covariates):
    """OLS residuals of y on (intercept, covariates) via the normal equations."""
    y = np.asarray(y, dtype=float)
    design = np.column_stack([np.ones(len(y))] + [np.asarray(c, float) for c in covariates])
    beta = np.linalg.solve(design.T @ design, design.T @ y)
    return y - design @ beta


def conditional_brute_force(x_geno, z_geno, y):
    """Conditional score/covariance from individual-level data.

    Residualizes y and the test genotypes on (intercept, Z) and recomputes
    scores on the residuals with the post-regression variance estimate.
    """
    x_geno = np.asarray(x_geno, float)
    z_geno = np.asarray(z_geno, float)
    y = np.asarray(y, float)
    n = len(y)
    design = np.column_stack([np.ones(n), z_geno])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid_y = y - design @ coef
    coef_x, *_ = np.linalg.lstsq(design, x_geno, rcond=None)
    resid_x = x_geno - design @ coef_x
    u_tilde = resid_x.T @ resid_y
    sigma2 = np.mean((y - y.mean()) ** 2)
    zc = z_geno - z_geno.mean(axis=0)
    uz = zc.T @ y
    alpha = np.linalg.pinv(zc.T @ zc) @ uz
    phi2 = max(sigma2 - float(uz @ alpha) / n, 0.0)
    v_tilde = phi2 * (resid_x.T @ resid_x)
    return u_tilde, v_tilde


def normal_two_sided_p(t):
    return 2.0 * norm.sf(abs(t))


def permutation_pvalue(weighted_geno, residuals, observed, n_perm, rng):
    """Within-study phenotype-permutation p-value for a burden-style statistic.

    ``weighted_geno`` is the centred genotype matrix already collapsed by the
    burden weights (one column per study concatenated is fine because the
    permutations below are done per call, i.e. within one study).
    """
    b = np.asarray(weighted_geno, float)
    y = np.asarray(residuals, float)
    exceed = 0
    chunk = 20000
    done = 0
    while done < n_perm:
        m = min(chunk, n_perm - done)
        perms = np.empty((m, len(y)))
        for i in range(m):
            perms[i] = rng.permutation(y)
        stats = np.abs(perms @ b)
        exceed += int((stats >= observed).sum())
        done += m
    return (exceed + 1) / (n_perm + 1)
