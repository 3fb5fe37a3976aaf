"""Conditional analysis from summary statistics.

Adjusts pooled scores for the effects of known (conditioning) variants using
only what studies share: since V_k = sigma2_k * C_k with C_k the centered
genotype cross-product matrix, each study's scores can be residualized on
the conditioning variants as

    alpha_k   = C_zz^-1 U_z                      (per-study effect of Z)
    phi2_k    = sigma2_k - U_z' C_zz^-1 U_z / N  (residual trait variance)
    U~_x,k    = U_x - C_xz C_zz^-1 U_z
    V~_k      = phi2_k * (C_xx - C_xz C_zz^-1 C_zx)

and the adjusted pieces pool by summation exactly like unconditional ones.
Every covariance the formulas need must lie inside the shared window; a
required pair outside any study's band is an error, because the information
is genuinely missing from the summaries.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import DataError, SummaryBlock, VariantKey, order_variants
from .genetests import (
    GeneTestResult,
    KernelSpec,
    McConfig,
    WeightVector,
    burden_from_arrays,
    skat_from_arrays,
)
from .meta import AlignedStudy, harmonize

_PINV_RTOL = 1e-10


@dataclass(frozen=True)
class StudyAdjustment:
    """Bookkeeping for one study's conditional adjustment."""

    study_id: str
    n_conditioning: int
    resid_var: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConditionalBlock:
    """Pooled conditional scores for a set of test variants.

    ``score`` and ``cov`` play the same roles as the pooled unconditional
    U and V; ``alt_af`` and ``n_totals`` carry the (unconditional) pooled
    frequencies, which downstream weights are built from.
    """

    test_keys: tuple[VariantKey, ...]
    conditioning_keys: tuple[VariantKey, ...]
    score: np.ndarray
    cov: np.ndarray
    n_total: int
    alt_af: np.ndarray
    n_totals: np.ndarray
    adjustments: tuple[StudyAdjustment, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("score", "cov", "alt_af", "n_totals"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_test(self) -> int:
        return len(self.test_keys)

    def weights(self, scheme: str = "uniform") -> WeightVector:
        if scheme == "uniform":
            return WeightVector.uniform(self.n_test)
        if scheme == "mb":
            return WeightVector.madsen_browning(self.alt_af, np.maximum(self.n_totals, 1))
        raise ValueError(f"unknown weight scheme {scheme!r}")


def _pair_value(st: AlignedStudy, a: VariantKey, b: VariantKey, context: str) -> float:
    """Stored covariance between two variants present in a study.

    Raises when the pair falls outside the study's band: those entries were
    never shared, so the conditional formulas cannot be evaluated.
    """
    if a.chrom != b.chrom or abs(a.pos - b.pos) >= st.window_bp:
        raise DataError(
            f"study {st.study_id}: covariance of {a} and {b} (needed for "
            f"{context}) lies outside the {st.window_bp} bp window"
        )
    return st.cov_get(a, b)


def _solve_psd(mat: np.ndarray) -> tuple[np.ndarray, bool]:
    """Pseudo-inverse of a symmetric PSD matrix, flagging rank deficiency."""
    u, s, vt = np.linalg.svd(mat, hermitian=True)
    tol = _PINV_RTOL * s.max(initial=0.0)
    nonzero = s > tol
    inv = (vt.T[:, nonzero] / s[nonzero]) @ u.T[nonzero, :]
    return inv, bool((~nonzero).any() or not nonzero.any())


def condition(
    blocks: Sequence[SummaryBlock],
    test_keys: Sequence[VariantKey],
    conditioning_keys: Sequence[VariantKey],
) -> ConditionalBlock:
    """Pooled scores for ``test_keys`` adjusted for ``conditioning_keys``.

    Studies are harmonized first, so orientation flips apply to both sets.
    A test variant that also appears in the conditioning set is removed from
    the test side with a warning.  Studies that never observed any
    conditioning variant pass through unadjusted.
    """
    test = order_variants(dict.fromkeys(test_keys))
    cond = order_variants(dict.fromkeys(conditioning_keys))
    if not test:
        raise DataError("no test variants")
    warnings: list[str] = []
    overlap = set(test) & set(cond)
    if overlap:
        for k in order_variants(overlap):
            warnings.append(f"removed {k} from the test set: it is a conditioning variant")
        test = [k for k in test if k not in overlap]
        if not test:
            raise DataError("every test variant is also a conditioning variant")

    res = harmonize(blocks)
    warnings.extend(res.warnings)
    pooled_index = res.pooled.index()
    for k in cond:
        if k not in pooled_index:
            warnings.append(f"conditioning variant {k} was not observed in any study")
    for k in test:
        if k not in pooled_index:
            warnings.append(f"test variant {k} was not observed in any study")

    j = len(test)
    score = np.zeros(j)
    cov = np.zeros((j, j))
    adjustments: list[StudyAdjustment] = []
    for st in res.aligned:
        x_present = [i for i, k in enumerate(test) if k in st.scores]
        z_present = [k for k in cond if k in st.scores]
        flags: list[str] = []
        if not z_present:
            # nothing to adjust for in this study; contributions pass through
            for a_i, i in enumerate(x_present):
                score[i] += st.scores[test[i]]
                for b_i in range(a_i, len(x_present)):
                    jdx = x_present[b_i]
                    v = _pair_value(st, test[i], test[jdx], "the test covariance")
                    cov[i, jdx] += v
                    if i != jdx:
                        cov[jdx, i] += v
            adjustments.append(StudyAdjustment(st.study_id, 0, st.trait_var, ()))
            continue

        sigma2 = st.trait_var
        if not x_present:
            adjustments.append(
                StudyAdjustment(st.study_id, len(z_present), st.trait_var, ())
            )
            continue
        u_x = np.array([st.scores.get(test[i], 0.0) for i in x_present])
        u_z = np.array([st.scores[k] for k in z_present])
        c_zz = np.array(
            [
                [
                    _pair_value(st, a, b, "the conditioning covariance") / sigma2
                    for b in z_present
                ]
                for a in z_present
            ]
        )
        c_xz = np.array(
            [
                [
                    _pair_value(st, test[i], b, "the test-conditioning covariance") / sigma2
                    for b in z_present
                ]
                for i in x_present
            ]
        )
        c_xx = np.array(
            [
                [
                    _pair_value(st, test[i], test[jdx], "the test covariance") / sigma2
                    for jdx in x_present
                ]
                for i in x_present
            ]
        )
        inv, deficient = _solve_psd(c_zz)
        if deficient:
            flags.append("rank-deficient conditioning covariance; used a pseudo-inverse")
        alpha = inv @ u_z
        phi2 = sigma2 - float(u_z @ alpha) / st.n_samples
        if phi2 < 0.0:
            flags.append("residual trait variance clipped at zero")
            phi2 = 0.0
        u_adj = u_x - c_xz @ alpha
        v_adj = phi2 * (c_xx - c_xz @ inv @ c_xz.T)
        v_adj = (v_adj + v_adj.T) / 2.0
        for a_i, i in enumerate(x_present):
            score[i] += u_adj[a_i]
            for b_i in range(len(x_present)):
                cov[i, x_present[b_i]] += v_adj[a_i, b_i]
        adjustments.append(
            StudyAdjustment(st.study_id, len(z_present), phi2, tuple(flags))
        )

    np.fill_diagonal(cov, np.maximum(np.diag(cov), 0.0))
    alt_af = np.zeros(j)
    n_totals = np.zeros(j)
    for i, k in enumerate(test):
        pi = pooled_index.get(k)
        if pi is not None:
            alt_af[i] = res.pooled.variants[pi].alt_af
            n_totals[i] = res.pooled.variants[pi].n_total
    return ConditionalBlock(
        test_keys=tuple(test),
        conditioning_keys=tuple(cond),
        score=score,
        cov=cov,
        n_total=res.pooled.n_total,
        alt_af=alt_af,
        n_totals=n_totals,
        adjustments=tuple(adjustments),
        warnings=tuple(warnings),
    )


def _adjustment_diagnostics(cb: ConditionalBlock) -> tuple[str, ...]:
    out = [f"conditioned on {len(cb.conditioning_keys)} variant(s)"]
    for adj in cb.adjustments:
        for f in adj.flags:
            out.append(f"{adj.study_id}: {f}")
    return tuple(out)


def conditional_burden(
    cb: ConditionalBlock,
    gene: str,
    *,
    weights: WeightVector | None = None,
    empirical: McConfig | None = None,
    maf_cap: float | None = None,
) -> GeneTestResult:
    """Burden test on conditionally adjusted scores."""
    return burden_from_arrays(
        gene,
        cb.score,
        cb.cov,
        weights=weights,
        empirical=empirical,
        maf_cap=maf_cap,
        diagnostics=_adjustment_diagnostics(cb),
    )


def conditional_skat(
    cb: ConditionalBlock,
    gene: str,
    *,
    kernel: KernelSpec | None = None,
    empirical: McConfig | None = None,
    acc: float = 1e-9,
    maf_cap: float | None = None,
) -> GeneTestResult:
    """SKAT on conditionally adjusted scores."""
    result = skat_from_arrays(
        gene,
        cb.score,
        cb.cov,
        kernel=kernel,
        empirical=empirical,
        acc=acc,
        maf_cap=maf_cap,
    )
    return replace(result, diagnostics=result.diagnostics + _adjustment_diagnostics(cb))
