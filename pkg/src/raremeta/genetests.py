"""Gene-level association tests computed from pooled summary statistics.

All tests consume a pooled :class:`~raremeta.meta.MetaScoreSet`: burden
(weighted sum of scores), variable-threshold burden (maximum over nested
frequency cutoffs, with an analytic multivariate-normal p-value), SKAT
(quadratic form with a mixture-of-chi-square tail), and the per-study
Fisher / minimum-p combiners used as baselines.  Any test can additionally
report an adaptive Monte-Carlo p-value via :mod:`raremeta.montecarlo`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .core import DataError, GroupDefinition, VariantKey
from .meta import AlignedStudy, MetaScoreSet
from .montecarlo import McConfig, empirical_pvalue
from .numerics import mixture_chisq_tail, mvn_rectangle  # noqa: F401  (re-exported)

# eigenvalues below this fraction of the largest are treated as exact zeros
_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class WeightVector:
    """Per-variant weights for burden-style tests; aligned with the
    qualifying variants of a gene in canonical order."""

    weights: np.ndarray
    scheme: str = "custom"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-D array")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("weights must be finite and non-negative")
        w = w.copy()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.weights.size

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.ones(n), scheme="uniform")

    @classmethod
    def madsen_browning(cls, alt_afs, n_totals) -> "WeightVector":
        """1 / sqrt(p(1-p)) with the pooled frequency clamped away from the
        boundary (to its value under one extra heterozygote)."""
        p = np.asarray(alt_afs, dtype=np.float64)
        n = np.asarray(n_totals, dtype=np.float64)
        lo = 1.0 / (2.0 * n + 2.0)
        p = np.clip(p, lo, 1.0 - lo)
        return cls(1.0 / np.sqrt(p * (1.0 - p)), scheme="madsen-browning")

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightVector):
            return NotImplemented
        return self.scheme == other.scheme and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return id(self)


@dataclass(frozen=True)
class ThresholdDesign:
    """Nested inclusion indicators for the variable-threshold test.

    Column m includes every variant whose frequency (or minor-allele count)
    does not exceed ``thresholds[m]``; the last column includes everything.
    """

    thresholds: np.ndarray
    indicators: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thresholds, dtype=np.float64)
        ind = np.asarray(self.indicators, dtype=np.float64)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("thresholds must be non-empty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if ind.shape != (ind.shape[0], t.size) or ind.shape[0] == 0:
            raise ValueError("indicators must be variants x thresholds")
        if not np.isin(ind, (0.0, 1.0)).all():
            raise ValueError("indicators must be 0/1")
        if np.any(np.diff(ind, axis=1) < 0):
            raise ValueError("indicator columns must be nested")
        if not ind[:, -1].all():
            raise ValueError("the last column must include every variant")
        for arr in (t, ind):
            arr.flags.writeable = False
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "indicators", ind)

    @property
    def n_thresholds(self) -> int:
        return self.thresholds.size

    @classmethod
    def from_values(cls, values) -> "ThresholdDesign":
        """One threshold per distinct observed value (MAF or MAC)."""
        v = np.asarray(values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("need at least one variant")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("threshold values must be finite and non-negative")
        thresholds = np.unique(v)
        indicators = (v[:, None] <= thresholds[None, :]).astype(np.float64)
        return cls(thresholds, indicators)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ThresholdDesign):
            return NotImplemented
        return np.array_equal(self.thresholds, other.thresholds) and np.array_equal(
            self.indicators, other.indicators
        )

    def __hash__(self):
        return id(self)


@dataclass(frozen=True)
class KernelSpec:
    """Diagonal kernel for SKAT: Q = sum_j diag_j * U_j**2."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("kernel diagonal must be a non-empty 1-D array")
        if not np.isfinite(d).all() or (d < 0).any():
            raise ValueError("kernel diagonal must be finite and non-negative")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "diag", d)

    @classmethod
    def uniform(cls, n: int) -> "KernelSpec":
        return cls(np.ones(n))

    @classmethod
    def from_weights(cls, weights: WeightVector) -> "KernelSpec":
        return cls(weights.weights**2)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KernelSpec):
            return NotImplemented
        return np.array_equal(self.diag, other.diag)

    def __hash__(self):
        return id(self)


@dataclass(frozen=True)
class GeneTestResult:
    """Outcome of one gene-level test.

    ``p_analytic`` (and the fields that depend on a testable statistic) are
    None when the gene is degenerate — no qualifying variants, zero burden
    variance, or a failed numeric inversion — with the reason recorded in
    ``diagnostics``.
    """

    gene: str
    test: str
    n_variants: int
    maf_cap: float | None
    maf_cutoff: float | None
    statistic: float | None
    direction: int
    p_analytic: float | None
    p_empirical: float | None = None
    exceedances: int | None = None
    draws: int | None = None
    effect: float | None = None
    diagnostics: tuple[str, ...] = ()


def derive_gene_seed(base_seed: int, gene: str, purpose: str = "mc") -> int:
    """Stable per-gene RNG seed: hash of (base seed, gene label, purpose).

    Gene results are then independent of the order genes are processed in
    and of how work is split across threads.
    """
    payload = f"{int(base_seed)}:{purpose}:{gene}".encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def selected_variants(
    pooled: MetaScoreSet, group: GroupDefinition, maf_cap: float
) -> list[int]:
    """Indices of the group's variants that qualify for gene tests.

    A variant qualifies when it is present in the pooled set, its pooled MAF
    is at most ``maf_cap``, and its pooled variance is positive (a variant
    monomorphic in every study carries no information).
    """
    if not 0.0 < maf_cap <= 0.5:
        raise ValueError(f"maf_cap {maf_cap} outside (0, 0.5]")
    index = pooled.index()
    chosen = []
    for key in group.members:
        i = index.get(key)
        if i is None:
            continue
        v = pooled.variants[i]
        if v.maf <= maf_cap and pooled.cov.get(i, i) > 0.0:
            chosen.append(i)
    return chosen


def _degenerate(gene, test, n_variants, maf_cap, reason) -> GeneTestResult:
    return GeneTestResult(
        gene=gene,
        test=test,
        n_variants=n_variants,
        maf_cap=maf_cap,
        maf_cutoff=None,
        statistic=None,
        direction=0,
        p_analytic=None,
        diagnostics=(reason,),
    )


def _resolve_weights(weights, n, label) -> WeightVector:
    if weights is None:
        return WeightVector.uniform(n)
    if len(weights) != n:
        raise DataError(
            f"{label}: weight vector has {len(weights)} entries for {n} qualifying variants"
        )
    return weights


def burden_from_arrays(
    gene: str,
    u: np.ndarray,
    cov: np.ndarray,
    *,
    weights: WeightVector | None = None,
    empirical: McConfig | None = None,
    test: str = "burden",
    maf_cap: float | None = None,
    diagnostics: tuple[str, ...] = (),
) -> GeneTestResult:
    """Burden test on explicit score/covariance arrays.

    The analytic p-value is two-sided normal for T = w'U / sqrt(w'Vw); the
    effect estimate w'U / w'Vw is the score-based slope of the weighted
    burden.  Shared by the pooled and the conditional burden tests.
    """
    u = np.asarray(u, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    w = _resolve_weights(weights, u.size, gene)
    ub = float(w.weights @ u)
    vb = float(w.weights @ cov @ w.weights)
    if vb <= 0.0:
        return _degenerate(gene, test, u.size, maf_cap, "zero burden variance")
    stat = ub / np.sqrt(vb)
    result = GeneTestResult(
        gene=gene,
        test=test,
        n_variants=u.size,
        maf_cap=maf_cap,
        maf_cutoff=maf_cap,
        statistic=float(stat),
        direction=int(np.sign(ub)),
        p_analytic=float(2.0 * ndtr(-abs(stat))),
        effect=float(ub / vb),
        diagnostics=diagnostics,
    )
    if empirical is not None:
        wv = w.weights
        emp = empirical_pvalue(abs(ub), lambda draws: np.abs(draws @ wv), cov, empirical)
        result = _with_empirical(result, emp)
    return result


def _with_empirical(result: GeneTestResult, emp) -> GeneTestResult:
    return replace(result, p_empirical=emp.p, exceedances=emp.exceedances, draws=emp.draws)


def burden_test(
    pooled: MetaScoreSet,
    group: GroupDefinition,
    *,
    weights: WeightVector | None = None,
    maf_cap: float = 0.05,
    empirical: McConfig | None = None,
) -> GeneTestResult:
    """Weighted burden test of a gene from the pooled scores."""
    idx = selected_variants(pooled, group, maf_cap)
    if not idx:
        return _degenerate(group.gene, "burden", 0, maf_cap, "no qualifying variants")
    u = pooled.scores()[idx]
    cov = pooled.cov.dense(idx)
    return burden_from_arrays(
        group.gene, u, cov, weights=weights, empirical=empirical, maf_cap=maf_cap
    )


def vt_test(
    pooled: MetaScoreSet,
    group: GroupDefinition,
    *,
    maf_cap: float = 0.05,
    one_sided: bool = False,
    threshold_on: str = "maf",
    empirical: McConfig | None = None,
    seed: int = 0,
    mvn_tol: float = 1e-5,
    mvn_max_points: int = 262_144,
) -> GeneTestResult:
    """Variable-threshold burden test.

    Builds one unweighted burden per distinct frequency cutoff (pooled MAF
    by default, minor-allele count with ``threshold_on="count"``), takes the
    maximum standardized burden across cutoffs, and computes its p-value
    from the joint multivariate-normal law of the per-cutoff statistics.
    ``maf_cutoff`` in the result is the cutoff achieving the maximum.
    """
    idx = selected_variants(pooled, group, maf_cap)
    if not idx:
        return _degenerate(group.gene, "vt", 0, maf_cap, "no qualifying variants")
    mafs = pooled.mafs()[idx]
    if threshold_on == "maf":
        values = mafs
    elif threshold_on == "count":
        ac = np.array([pooled.variants[i].alt_af * 2.0 * pooled.variants[i].n_total for i in idx])
        n2 = np.array([2.0 * pooled.variants[i].n_total for i in idx])
        values = np.rint(np.minimum(ac, n2 - ac))
    else:
        raise ValueError(f"threshold_on must be 'maf' or 'count', got {threshold_on!r}")
    design = ThresholdDesign.from_values(values)

    u = pooled.scores()[idx]
    cov = pooled.cov.dense(idx)
    phi = design.indicators
    sigma = phi.T @ cov @ phi
    var = np.diag(sigma).copy()
    keep = var > _EIG_RTOL * max(cov.diagonal().max(), 1e-300)
    # a cutoff whose included variants cancel exactly cannot be standardized
    if not keep.any():
        return _degenerate(group.gene, "vt", len(idx), maf_cap, "zero burden variance")
    dropped = int((~keep).sum())
    thresholds = design.thresholds[keep]
    phi = phi[:, keep]
    sigma = sigma[np.ix_(keep, keep)]
    var = var[keep]

    sd = np.sqrt(var)
    t_all = (phi.T @ u) / sd
    signed = t_all if one_sided else np.abs(t_all)
    best = int(np.argmax(signed))
    stat = float(signed[best])
    direction = int(np.sign(t_all[best]))
    effect = float((phi[:, best] @ u) / var[best])

    diagnostics = []
    if dropped:
        diagnostics.append(f"dropped {dropped} zero-variance cutoff(s)")

    m = thresholds.size
    if m == 1:
        p = float(ndtr(-stat) if one_sided else 2.0 * ndtr(-stat))
    else:
        corr = sigma / np.outer(sd, sd)
        if one_sided:
            lower = np.full(m, -np.inf)
            upper = np.full(m, stat)
        else:
            lower = np.full(m, -stat)
            upper = np.full(m, stat)
        est = mvn_rectangle(
            lower, upper, corr, tol=mvn_tol, seed=seed, max_points=mvn_max_points
        )
        if est.error > 10.0 * mvn_tol:
            diagnostics.append(f"mvn integration failed (error {est.error:.2e})")
            p = None
        else:
            if est.error > mvn_tol:
                diagnostics.append(f"mvn error {est.error:.2e} above tolerance")
            p = float(min(max(1.0 - est.value, 0.0), 1.0))

    result = GeneTestResult(
        gene=group.gene,
        test="vt",
        n_variants=len(idx),
        maf_cap=maf_cap,
        maf_cutoff=float(thresholds[best]),
        statistic=stat,
        direction=direction,
        p_analytic=p,
        effect=effect,
        diagnostics=tuple(diagnostics),
    )
    if empirical is not None:
        a = phi / sd[None, :]
        if one_sided:
            fn = lambda draws: (draws @ a).max(axis=1)
        else:
            fn = lambda draws: np.abs(draws @ a).max(axis=1)
        emp = empirical_pvalue(stat, fn, cov, empirical)
        result = _with_empirical(result, emp)
    return result


def skat_from_arrays(
    gene: str,
    u: np.ndarray,
    cov: np.ndarray,
    *,
    kernel: KernelSpec | None = None,
    empirical: McConfig | None = None,
    acc: float = 1e-9,
    test: str = "skat",
    maf_cap: float | None = None,
) -> GeneTestResult:
    """SKAT on explicit arrays: Q = U'KU with K diagonal.

    The null distribution is a weighted sum of 1-df chi-squares whose
    weights are the eigenvalues of V^(1/2) K V^(1/2); the tail comes from
    exact inversion with a moment-matching fallback (flagged when used).
    """
    u = np.asarray(u, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    k = kernel or KernelSpec.uniform(u.size)
    if k.diag.size != u.size:
        raise DataError(f"{gene}: kernel has {k.diag.size} entries for {u.size} variants")
    q = float(k.diag @ u**2)

    evals, evecs = np.linalg.eigh(cov)
    evals = np.where(evals < _EIG_RTOL * max(evals.max(initial=0.0), 0.0), 0.0, evals)
    if evals.max(initial=0.0) <= 0.0:
        return _degenerate(gene, test, u.size, maf_cap, "zero covariance")
    root = evecs * np.sqrt(evals)
    s = (root.T * k.diag) @ root  # V^(1/2) K V^(1/2) up to an orthogonal rotation
    lambdas = np.linalg.eigvalsh(s)
    lambdas = lambdas[lambdas > _EIG_RTOL * lambdas.max(initial=0.0)]
    if lambdas.size == 0:
        return _degenerate(gene, test, u.size, maf_cap, "all mixture weights are zero")

    tail = mixture_chisq_tail(lambdas, q, acc=acc)
    diagnostics = []
    if tail.method == "liu":
        diagnostics.append("liu moment-matching fallback")
    result = GeneTestResult(
        gene=gene,
        test=test,
        n_variants=u.size,
        maf_cap=maf_cap,
        maf_cutoff=maf_cap,
        statistic=q,
        direction=0,
        p_analytic=float(tail.p),
        diagnostics=tuple(diagnostics),
    )
    if empirical is not None:
        kd = k.diag
        emp = empirical_pvalue(q, lambda draws: (draws**2) @ kd, cov, empirical)
        result = _with_empirical(result, emp)
    return result


def skat_test(
    pooled: MetaScoreSet,
    group: GroupDefinition,
    *,
    kernel: KernelSpec | None = None,
    maf_cap: float = 0.05,
    empirical: McConfig | None = None,
    acc: float = 1e-9,
) -> GeneTestResult:
    """SKAT from the pooled scores of a gene's qualifying variants."""
    idx = selected_variants(pooled, group, maf_cap)
    if not idx:
        return _degenerate(group.gene, "skat", 0, maf_cap, "no qualifying variants")
    u = pooled.scores()[idx]
    cov = pooled.cov.dense(idx)
    return skat_from_arrays(
        group.gene, u, cov, kernel=kernel, empirical=empirical, acc=acc, maf_cap=maf_cap
    )


def _validated_pvalues(p_values: Iterable[float]) -> np.ndarray:
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        raise DataError("no p-values to combine")
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p > 1.0):
        raise DataError("p-values must lie in (0, 1]")
    return p


def fisher_combine(p_values: Iterable[float]) -> float:
    """Fisher's method: -2 sum(log p) against chi-square with 2m df."""
    p = _validated_pvalues(p_values)
    return float(chi2.sf(-2.0 * np.log(p).sum(), 2 * p.size))


def min_p(p_values: Iterable[float], m_effective: float | None = None) -> float:
    """Minimum-p combiner with a Sidak-style correction: 1 - (1 - pmin)^m."""
    p = _validated_pvalues(p_values)
    m = float(len(p) if m_effective is None else m_effective)
    if m < 1.0:
        raise ValueError("m_effective must be at least 1")
    return float(-np.expm1(m * np.log1p(-p.min())))


def _per_study_burden_pvalues(
    aligned: Sequence[AlignedStudy],
    pooled: MetaScoreSet,
    group: GroupDefinition,
    *,
    weights: WeightVector | None,
    maf_cap: float,
) -> tuple[list[float], list[str], int]:
    """Two-sided per-study burden p-values over the pooled qualifying set."""
    idx = selected_variants(pooled, group, maf_cap)
    if not idx:
        return [], [], 0
    keys = [pooled.variants[i].key for i in idx]
    w = _resolve_weights(weights, len(keys), group.gene)
    pvals: list[float] = []
    skipped: list[str] = []
    for st in aligned:
        present = [(j, k) for j, k in enumerate(keys) if k in st.scores]
        if not present:
            skipped.append(st.study_id)
            continue
        wk = np.array([w.weights[j] for j, _ in present])
        uk = np.array([st.scores[k] for _, k in present])
        vk = np.array(
            [[st.cov_get(a, b) for _, b in present] for _, a in present]
        )
        vb = float(wk @ vk @ wk)
        if vb <= 0.0:
            skipped.append(st.study_id)
            continue
        t = (wk @ uk) / np.sqrt(vb)
        pvals.append(float(2.0 * ndtr(-abs(t))))
    return pvals, skipped, len(idx)


def fisher_meta(
    aligned: Sequence[AlignedStudy],
    pooled: MetaScoreSet,
    group: GroupDefinition,
    *,
    weights: WeightVector | None = None,
    maf_cap: float = 0.05,
) -> GeneTestResult:
    """Baseline: Fisher-combine per-study burden p-values for one gene."""
    pvals, skipped, n_sel = _per_study_burden_pvalues(
        aligned, pooled, group, weights=weights, maf_cap=maf_cap
    )
    diagnostics = tuple(f"study {s} contributed no information" for s in skipped)
    if not pvals:
        return _degenerate(group.gene, "fisher", n_sel, maf_cap, "no study-level tests")
    stat = float(-2.0 * np.log(pvals).sum())
    return GeneTestResult(
        gene=group.gene,
        test="fisher",
        n_variants=n_sel,
        maf_cap=maf_cap,
        maf_cutoff=maf_cap,
        statistic=stat,
        direction=0,
        p_analytic=fisher_combine(pvals),
        diagnostics=diagnostics,
    )


def minp_meta(
    aligned: Sequence[AlignedStudy],
    pooled: MetaScoreSet,
    group: GroupDefinition,
    *,
    weights: WeightVector | None = None,
    maf_cap: float = 0.05,
) -> GeneTestResult:
    """Baseline: smallest per-study burden p with a Sidak-style correction."""
    pvals, skipped, n_sel = _per_study_burden_pvalues(
        aligned, pooled, group, weights=weights, maf_cap=maf_cap
    )
    diagnostics = tuple(f"study {s} contributed no information" for s in skipped)
    if not pvals:
        return _degenerate(group.gene, "minp", n_sel, maf_cap, "no study-level tests")
    return GeneTestResult(
        gene=group.gene,
        test="minp",
        n_variants=n_sel,
        maf_cap=maf_cap,
        maf_cutoff=maf_cap,
        statistic=float(min(pvals)),
        direction=0,
        p_analytic=min_p(pvals),
        diagnostics=diagnostics,
    )


def _weights_for(scheme: str, pooled: MetaScoreSet, idx: list[int]) -> WeightVector | None:
    if scheme == "uniform":
        return None
    if scheme == "mb":
        return WeightVector.madsen_browning(
            [pooled.variants[i].alt_af for i in idx],
            [pooled.variants[i].n_total for i in idx],
        )
    raise ValueError(f"unknown weight scheme {scheme!r}")


def run_gene_tests(
    pooled: MetaScoreSet,
    groups: Sequence[GroupDefinition],
    *,
    tests: Sequence[str] = ("burden", "vt", "skat"),
    maf_caps: Sequence[float] = (0.01, 0.05),
    weight_scheme: str = "uniform",
    aligned: Sequence[AlignedStudy] = (),
    empirical: bool = False,
    mc_target_exceedances: int = 100,
    mc_max_draws: int = 40_000_000,
    seed: int = 0,
    one_sided_vt: bool = False,
    vt_threshold_on: str = "maf",
) -> list[GeneTestResult]:
    """Run the requested tests for every group at every MAF cap.

    Results come back sorted by (gene, test, cap); Monte-Carlo and lattice
    seeds are derived per gene so the output does not depend on scheduling.
    """
    known = {"burden", "vt", "skat", "fisher", "minp"}
    bad = [t for t in tests if t not in known]
    if bad:
        raise ValueError(f"unknown test(s): {', '.join(bad)}")
    if ("fisher" in tests or "minp" in tests) and not aligned:
        raise DataError("fisher/minp baselines need per-study aligned blocks")
    out: list[GeneTestResult] = []
    for group in sorted(groups, key=lambda g: g.gene):
        mc = (
            McConfig(
                target_exceedances=mc_target_exceedances,
                max_draws=mc_max_draws,
                seed=derive_gene_seed(seed, group.gene, "mc"),
            )
            if empirical
            else None
        )
        mvn_seed = derive_gene_seed(seed, group.gene, "mvn")
        for cap in maf_caps:
            idx = selected_variants(pooled, group, cap)
            w = _weights_for(weight_scheme, pooled, idx) if idx else None
            for test in tests:
                if test == "burden":
                    out.append(
                        burden_test(pooled, group, weights=w, maf_cap=cap, empirical=mc)
                    )
                elif test == "vt":
                    out.append(
                        vt_test(
                            pooled,
                            group,
                            maf_cap=cap,
                            one_sided=one_sided_vt,
                            threshold_on=vt_threshold_on,
                            empirical=mc,
                            seed=mvn_seed,
                        )
                    )
                elif test == "skat":
                    kernel = KernelSpec.from_weights(w) if w is not None else None
                    out.append(
                        skat_test(pooled, group, kernel=kernel, maf_cap=cap, empirical=mc)
                    )
                elif test == "fisher":
                    out.append(
                        fisher_meta(aligned, pooled, group, weights=w, maf_cap=cap)
                    )
                elif test == "minp":
                    out.append(
                        minp_meta(aligned, pooled, group, weights=w, maf_cap=cap)
                    )
    order = {t: i for i, t in enumerate(("burden", "vt", "skat", "fisher", "minp"))}
    out.sort(key=lambda r: (r.gene, order[r.test], r.maf_cap))
    return out
