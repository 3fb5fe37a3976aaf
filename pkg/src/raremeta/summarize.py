"""Per-study summarization of individual-level data.

The pipeline a participating study runs locally: residualize the trait on
covariates, rank-normalize, impute missing dosages to the column mean, and
compute the per-variant score statistics plus the banded covariance that will
be shared.  QC metrics (call rate, exact Hardy-Weinberg p) always come from
the pre-imputation genotypes; scores come from the imputed ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.linalg import qr
from scipy.special import ndtri
from scipy.stats import rankdata

from .core import (
    BandedMatrix,
    DataError,
    GenotypeMatrix,
    PhenotypeVector,
    SummaryBlock,
    VariantKey,
    VariantSummary,
)
from .numerics import _kernels


@dataclass(frozen=True)
class CovariateMatrix:
    """Covariates for residualization; an intercept column is implicit.

    A rank-deficient design (after adding the intercept) is detected at
    construction and the offending columns are named so the caller can fix
    the input rather than silently fitting a degenerate model.
    """

    entries: np.ndarray
    labels: tuple[str, ...] = ()
    collinear: tuple[str, ...] = field(init=False, compare=False)

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValueError("covariate entries must be 2-D (samples x covariates)")
        if not np.isfinite(entries).all():
            raise ValueError("covariate entries must be finite")
        labels = tuple(self.labels) or tuple(
            f"covariate_{i}" for i in range(entries.shape[1])
        )
        if len(labels) != entries.shape[1]:
            raise ValueError("one label per covariate column required")
        entries = entries.copy()
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "collinear", self._find_collinear())

    def _find_collinear(self) -> tuple[str, ...]:
        design = self.design()
        if design.shape[0] < design.shape[1]:
            return tuple(("intercept",) + self.labels)[design.shape[0]:]
        _, r, piv = qr(design, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = diag.max(initial=0.0) * max(design.shape) * np.finfo(np.float64).eps
        rank = int((diag > tol).sum())
        names = ("intercept",) + self.labels
        return tuple(sorted(names[j] for j in piv[rank:]))

    @property
    def n_samples(self) -> int:
        return self.entries.shape[0]

    @property
    def rank_deficient(self) -> bool:
        return bool(self.collinear)

    def design(self) -> np.ndarray:
        """Design matrix with the intercept column prepended."""
        return np.column_stack([np.ones(self.n_samples), self.entries])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CovariateMatrix):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return id(self)


def residualize(raw_trait, covariates: CovariateMatrix | None = None) -> np.ndarray:
    """Ordinary-least-squares residuals of the trait on the covariates.

    With no covariates this just centers the trait (the intercept is always
    included).  Raises :class:`DataError` when the design is rank deficient,
    naming the collinear columns.
    """
    y = np.asarray(raw_trait, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise DataError("trait must be a non-empty 1-D array")
    if not np.isfinite(y).all():
        raise DataError("trait values must be finite")
    if covariates is None:
        return y - y.mean()
    if covariates.n_samples != y.size:
        raise DataError(
            f"{y.size} trait values but {covariates.n_samples} covariate rows"
        )
    if covariates.rank_deficient:
        raise DataError(
            "covariate design is rank deficient; collinear columns: "
            + ", ".join(covariates.collinear)
        )
    design = covariates.design()
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef


def inverse_normal_transform(values) -> np.ndarray:
    """Map values to normal quantiles by rank: Phi^-1((rank - 0.5) / N).

    Ties receive the average rank.  A constant vector has no rank order and
    raises :class:`DataError`.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DataError("values must be a non-empty 1-D array")
    if not np.isfinite(v).all():
        raise DataError("values must be finite")
    if np.all(v == v[0]):
        raise DataError("cannot rank-normalize a constant vector")
    ranks = rankdata(v, method="average")
    return ndtri((ranks - 0.5) / v.size)


class ImputeResult(NamedTuple):
    genotypes: GenotypeMatrix
    dropped: tuple[VariantKey, ...]


def impute_missing(genotypes: GenotypeMatrix) -> ImputeResult:
    """Replace missing dosages with the column mean of observed ones.

    Columns with no observed genotype at all cannot be imputed; they are
    dropped and reported so the caller can log the exclusion.
    """
    if not genotypes.has_missing():
        return ImputeResult(genotypes, ())
    entries = np.array(genotypes.entries)
    observed = ~np.isnan(entries)
    keep = observed.any(axis=0)
    dropped = tuple(k for k, ok in zip(genotypes.variants, keep) if not ok)
    entries = entries[:, keep]
    means = genotypes.col_means[keep]
    nan_rows, nan_cols = np.nonzero(np.isnan(entries))
    entries[nan_rows, nan_cols] = means[nan_cols]
    kept_keys = tuple(k for k, ok in zip(genotypes.variants, keep) if ok)
    return ImputeResult(GenotypeMatrix(kept_keys, entries), dropped)


def hwe_exact_pvalue(n_ref_hom: int, n_het: int, n_alt_hom: int) -> float:
    """Exact Hardy-Weinberg equilibrium test from genotype counts.

    Sums the conditional probabilities (given allele counts) of every
    heterozygote count no more likely than the observed one.  Degenerate
    totals return 1.
    """
    for name, v in (("n_ref_hom", n_ref_hom), ("n_het", n_het), ("n_alt_hom", n_alt_hom)):
        if int(v) != v or v < 0:
            raise DataError(f"{name} must be a non-negative integer, got {v!r}")
    return float(_kernels.hwe_exact(int(n_het), int(n_ref_hom), int(n_alt_hom)))


def _genotype_counts(column: np.ndarray) -> tuple[int, int, int]:
    observed = column[~np.isnan(column)]
    # dosages are rounded to hard calls for the HWE count test
    calls = np.clip(np.rint(observed), 0, 2).astype(np.int64)
    counts = np.bincount(calls, minlength=3)
    return int(counts[0]), int(counts[1]), int(counts[2])


def compute_summary(
    genotypes: GenotypeMatrix,
    residuals: PhenotypeVector | Sequence[float],
    *,
    study_id: str,
    window_bp: int = 1_000_000,
    raw_genotypes: GenotypeMatrix | None = None,
) -> SummaryBlock:
    """Per-variant scores and banded covariance for one study.

    ``genotypes`` must be fully imputed (no missing entries); pass the
    pre-imputation matrix as ``raw_genotypes`` so call rates and
    Hardy-Weinberg p-values reflect the data actually observed.

    For variant j with centered dosage column x_j and residual vector y:
    score U_j = x_j . y, covariance V_ij = sigma2 * (x_i . x_j) with sigma2
    the residual variance (N denominator), stored for same-chromosome pairs
    less than ``window_bp`` apart.  Monomorphic columns yield exact zeros.
    """
    if genotypes.has_missing():
        raise DataError("genotypes contain missing dosages; run impute_missing first")
    if not isinstance(residuals, PhenotypeVector):
        residuals = PhenotypeVector.from_values(np.asarray(residuals, dtype=np.float64))
    n = genotypes.n_samples
    if n != residuals.n:
        raise DataError(f"{n} genotype rows but {residuals.n} residuals")
    if n < 2:
        raise DataError("need at least two samples")
    if residuals.degenerate:
        raise DataError("residuals have zero variance")
    raw = genotypes if raw_genotypes is None else raw_genotypes
    if raw.variants != genotypes.variants or raw.n_samples != n:
        raise DataError("raw_genotypes must cover the same samples and variants")

    # canonical variant order for the output block
    order = sorted(range(genotypes.n_variants), key=lambda j: genotypes.variants[j].sort_key())
    keys = [genotypes.variants[j] for j in order]
    X = genotypes.entries[:, order]
    raw_cols = raw.entries[:, order]

    centered = X - genotypes.col_means[order]
    y = residuals.values
    scores = y @ centered
    sigma2 = residuals.variance

    records = []
    for idx, key in enumerate(keys):
        raw_col = raw_cols[:, idx]
        n_inf = int((~np.isnan(raw_col)).sum())
        if n_inf == 0:
            raise DataError(f"variant {key} has no observed genotypes; impute_missing drops such columns")
        af = float(genotypes.col_means[order[idx]] / 2.0)
        n0, n1, n2 = _genotype_counts(raw_col)
        records.append(
            VariantSummary(
                key=key,
                n_informative=n_inf,
                alt_af=af,
                call_rate=n_inf / n,
                hwe_p=hwe_exact_pvalue(n0, n1, n2),
                score=float(scores[idx]),
            )
        )

    pairs: dict[tuple[int, int], float] = {}
    j_count = len(keys)
    for i in range(j_count):
        ki = keys[i]
        stop = i + 1
        while (
            stop < j_count
            and keys[stop].chrom == ki.chrom
            and keys[stop].pos - ki.pos < window_bp
        ):
            stop += 1
        vals = sigma2 * (centered[:, i] @ centered[:, i:stop])
        for j, v in zip(range(i, stop), np.atleast_1d(vals)):
            pairs[(i, j)] = float(v)
    # guard against tiny negative diagonals from cancellation
    for i in range(j_count):
        if pairs[(i, i)] < 0.0:
            pairs[(i, i)] = 0.0

    return SummaryBlock(
        study_id=study_id,
        n_samples=n,
        trait_mean=residuals.mean,
        trait_var=sigma2,
        variants=tuple(records),
        cov=BandedMatrix(j_count, pairs),
        window_bp=window_bp,
    )


def summarize_study(
    genotypes: GenotypeMatrix,
    raw_trait,
    covariates: CovariateMatrix | None = None,
    *,
    study_id: str,
    window_bp: int = 1_000_000,
    inverse_normal: bool = True,
) -> tuple[SummaryBlock, tuple[VariantKey, ...]]:
    """Full per-study pipeline: residualize, transform, impute, summarize.

    Returns the summary block and any variants dropped for having no
    observed genotypes.
    """
    resid = residualize(raw_trait, covariates)
    values = inverse_normal_transform(resid) if inverse_normal else resid
    pheno = PhenotypeVector.from_values(values)
    imputed, dropped = impute_missing(genotypes)
    if dropped:
        keep = [i for i, k in enumerate(genotypes.variants) if k not in set(dropped)]
        raw = GenotypeMatrix(
            tuple(genotypes.variants[i] for i in keep), genotypes.entries[:, keep]
        )
    else:
        raw = genotypes
    block = compute_summary(
        imputed, pheno, study_id=study_id, window_bp=window_bp, raw_genotypes=raw
    )
    return block, dropped
