"""Cross-study harmonization and single-variant meta-analysis.

Studies are matched by (chromosome, position).  When two studies report the
same site with swapped ref/alt alleles, the minority orientation is flipped
(score negated, allele frequency complemented, covariance row negated) so
that every study counts the same allele.  Sites reported with irreconcilable
allele pairs are excluded with a warning rather than silently mixed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .core import (
    BandedMatrix,
    DataError,
    SummaryBlock,
    VariantKey,
    VariantSummary,
    order_variants,
)

_KeyPair = tuple[VariantKey, VariantKey]


@dataclass(frozen=True)
class MetaVariant:
    """One variant's pooled summary across studies.

    ``n_total`` counts samples only in the studies where the variant was
    actually present; ``alt_af`` is the allele-count-weighted frequency over
    those studies.
    """

    key: VariantKey
    n_total: int
    n_informative: int
    n_studies: int
    alt_af: float
    score: float

    @property
    def maf(self) -> float:
        return min(self.alt_af, 1.0 - self.alt_af)


@dataclass(frozen=True)
class MetaScoreSet:
    """Pooled scores and covariance over one or more studies.

    Structurally a multi-study analogue of :class:`SummaryBlock`; studies
    absent at a variant contribute exactly zero to its score and covariance.
    """

    studies: tuple[str, ...]
    n_total: int
    window_bp: int
    variants: tuple[MetaVariant, ...]
    cov: BandedMatrix

    def __post_init__(self):
        if not self.studies:
            raise ValueError("a score set needs at least one study")
        if len(set(self.studies)) != len(self.studies):
            raise ValueError("duplicate study ids")
        if self.n_total < 1:
            raise ValueError("n_total must be positive")
        if self.window_bp <= 0:
            raise ValueError("window_bp must be positive")
        variants = tuple(self.variants)
        object.__setattr__(self, "variants", variants)
        keys = [v.key for v in variants]
        if keys != order_variants(keys):
            raise ValueError("variants must be in canonical sorted order")
        coords = [(k.chrom, k.pos) for k in keys]
        if len(set(coords)) != len(coords):
            raise ValueError("two variants share a (chrom, pos) coordinate")
        if self.cov.size != len(variants):
            raise ValueError("covariance size does not match variant count")
        for (i, j) in self.cov.pairs:
            if i == j:
                continue
            ki, kj = keys[i], keys[j]
            if ki.chrom != kj.chrom or abs(ki.pos - kj.pos) >= self.window_bp:
                raise ValueError(
                    f"stored covariance pair ({ki}, {kj}) lies outside the "
                    f"{self.window_bp} bp band"
                )

    @property
    def keys(self) -> tuple[VariantKey, ...]:
        return tuple(v.key for v in self.variants)

    @property
    def n_variants(self) -> int:
        return len(self.variants)

    def index(self) -> dict[VariantKey, int]:
        return {v.key: i for i, v in enumerate(self.variants)}

    def scores(self) -> np.ndarray:
        return np.array([v.score for v in self.variants])

    def mafs(self) -> np.ndarray:
        return np.array([v.maf for v in self.variants])


@dataclass(frozen=True)
class AlignedStudy:
    """One study's contribution after orientation flips and exclusions.

    Keeps per-study scores and covariance addressable by variant key, which
    is what conditional analysis and per-study baseline tests need.
    """

    study_id: str
    n_samples: int
    trait_var: float
    window_bp: int
    scores: dict[VariantKey, float]
    alt_af: dict[VariantKey, float]
    pairs: dict[_KeyPair, float]

    def cov_get(self, a: VariantKey, b: VariantKey) -> float:
        if b.sort_key() < a.sort_key():
            a, b = b, a
        return self.pairs.get((a, b), 0.0)


@dataclass(frozen=True)
class HarmonizeResult:
    pooled: MetaScoreSet
    aligned: tuple[AlignedStudy, ...]
    warnings: tuple[str, ...]

    @property
    def complete_alignment(self) -> bool:
        """True when every input was a per-study block (not already pooled)."""
        return len(self.aligned) == len(self.pooled.studies)


class _Contribution:
    """Uniform view of a SummaryBlock or MetaScoreSet during harmonization."""

    __slots__ = ("study_ids", "n_samples", "window_bp", "entries", "pairs", "source")

    def __init__(self, inp: Union[SummaryBlock, MetaScoreSet]):
        self.source = inp
        self.entries: dict[VariantKey, tuple[float, int, int, int, float]] = {}
        self.pairs: dict[_KeyPair, float] = {}
        if isinstance(inp, SummaryBlock):
            self.study_ids = (inp.study_id,)
            self.n_samples = inp.n_samples
            self.window_bp = inp.window_bp
            keys = inp.keys
            for v in inp.variants:
                self.entries[v.key] = (v.alt_af, inp.n_samples, v.n_informative, 1, v.score)
            for (i, j), val in inp.cov.pairs.items():
                self.pairs[(keys[i], keys[j])] = val
        elif isinstance(inp, MetaScoreSet):
            self.study_ids = inp.studies
            self.n_samples = inp.n_total
            self.window_bp = inp.window_bp
            keys = inp.keys
            for v in inp.variants:
                self.entries[v.key] = (v.alt_af, v.n_total, v.n_informative, v.n_studies, v.score)
            for (i, j), val in inp.cov.pairs.items():
                self.pairs[(keys[i], keys[j])] = val
        else:
            raise TypeError(f"cannot harmonize {type(inp).__name__}")

    def n_studies_at(self, key: VariantKey) -> int:
        return self.entries[key][3]

    def flip(self, old: VariantKey) -> None:
        new = old.flipped()
        af, n, n_inf, n_st, score = self.entries.pop(old)
        self.entries[new] = (1.0 - af, n, n_inf, n_st, -score)
        renamed: dict[_KeyPair, float] = {}
        for (a, b), v in self.pairs.items():
            hits = (a == old) + (b == old)
            if hits == 0:
                renamed[(a, b)] = v
                continue
            a2 = new if a == old else a
            b2 = new if b == old else b
            if b2.sort_key() < a2.sort_key():
                a2, b2 = b2, a2
            # flipping one endpoint negates the covariance; both cancels
            renamed[(a2, b2)] = -v if hits == 1 else v
        self.pairs = renamed

    def drop(self, key: VariantKey) -> None:
        self.entries.pop(key, None)
        self.pairs = {
            (a, b): v for (a, b), v in self.pairs.items() if a != key and b != key
        }


def flip_variant(block: SummaryBlock, key: VariantKey) -> SummaryBlock:
    """Rewrite one block with a variant's allele orientation swapped.

    The returned block counts the other allele at that site: ref/alt swap,
    alt_af becomes 1 - alt_af, the score is negated, and covariance entries
    pairing this variant with any other are negated.
    """
    idx = block.index()
    if key not in idx:
        raise DataError(f"variant {key} not present in study {block.study_id}")
    i = idx[key]
    new_variants = []
    for j, v in enumerate(block.variants):
        if j == i:
            v = VariantSummary(
                key=key.flipped(),
                n_informative=v.n_informative,
                alt_af=1.0 - v.alt_af,
                call_rate=v.call_rate,
                hwe_p=v.hwe_p,
                score=-v.score,
            )
        new_variants.append(v)
    pairs = {}
    for (a, b), val in block.cov.pairs.items():
        if (a == i) != (b == i):
            val = -val
        pairs[(a, b)] = val
    return SummaryBlock(
        study_id=block.study_id,
        n_samples=block.n_samples,
        trait_mean=block.trait_mean,
        trait_var=block.trait_var,
        variants=tuple(new_variants),
        cov=BandedMatrix(block.cov.size, pairs),
        window_bp=block.window_bp,
    )


def harmonize(inputs: Sequence[Union[SummaryBlock, MetaScoreSet]]) -> HarmonizeResult:
    """Align allele orientations across inputs and pool their statistics.

    Inputs may be per-study blocks, already-pooled sets, or a mix, so pooling
    is associative: harmonizing blocks in stages gives the same pooled set as
    harmonizing them all at once.  Returns the pooled set, a per-study
    aligned view for each block input, and human-readable warnings for every
    flipped or excluded site.
    """
    if not inputs:
        raise DataError("nothing to harmonize")
    contribs = [_Contribution(inp) for inp in inputs]
    all_ids = [sid for c in contribs for sid in c.study_ids]
    if len(set(all_ids)) != len(all_ids):
        dupes = sorted({s for s in all_ids if all_ids.count(s) > 1})
        raise DataError(f"study id(s) appear more than once: {', '.join(dupes)}")

    warnings: list[str] = []

    # group every reported key by coordinate to resolve orientations
    by_coord: dict[tuple[str, int], list[tuple[int, VariantKey]]] = {}
    for ci, c in enumerate(contribs):
        for key in c.entries:
            by_coord.setdefault((key.chrom, key.pos), []).append((ci, key))

    for coord in sorted(by_coord, key=lambda c: (c[0], c[1])):
        listed = by_coord[coord]
        allele_sets = {frozenset((k.ref, k.alt)) for _, k in listed}
        if len(allele_sets) > 1:
            names = ", ".join(sorted({f"{k.ref}/{k.alt}" for _, k in listed}))
            warnings.append(
                f"excluded {coord[0]}:{coord[1]}: irreconcilable alleles across studies ({names})"
            )
            for ci, key in listed:
                contribs[ci].drop(key)
            continue
        first = listed[0][1]
        votes = {first: 0, first.flipped(): 0}
        for ci, key in listed:
            votes[key] += contribs[ci].n_studies_at(key)
        # majority orientation; ties go to the first input that listed the site
        canonical = first if votes[first] >= votes[first.flipped()] else first.flipped()
        for ci, key in listed:
            if key != canonical:
                warnings.append(
                    f"flipped {key} to {canonical} in "
                    + "/".join(contribs[ci].study_ids)
                )
                contribs[ci].flip(key)

    union = order_variants({k for c in contribs for k in c.entries})
    index = {k: i for i, k in enumerate(union)}
    window_bp = min(c.window_bp for c in contribs)

    score = np.zeros(len(union))
    n_total = np.zeros(len(union), dtype=np.int64)
    n_inf = np.zeros(len(union), dtype=np.int64)
    n_studies = np.zeros(len(union), dtype=np.int64)
    af_num = np.zeros(len(union))
    pooled_pairs: dict[tuple[int, int], float] = {(i, i): 0.0 for i in range(len(union))}
    for c in contribs:
        for key, (af, n, ni, ns, u) in c.entries.items():
            i = index[key]
            score[i] += u
            n_total[i] += n
            n_inf[i] += ni
            n_studies[i] += ns
            af_num[i] += n * af
        for (ka, kb), v in c.pairs.items():
            i, j = index[ka], index[kb]
            if i > j:
                i, j = j, i
            if i != j and (ka.chrom != kb.chrom or abs(ka.pos - kb.pos) >= window_bp):
                continue  # pooled band is the narrowest input band
            pooled_pairs[(i, j)] = pooled_pairs.get((i, j), 0.0) + v

    variants = tuple(
        MetaVariant(
            key=k,
            n_total=int(n_total[i]),
            n_informative=int(n_inf[i]),
            n_studies=int(n_studies[i]),
            alt_af=float(af_num[i] / n_total[i]),
            score=float(score[i]),
        )
        for i, k in enumerate(union)
    )
    pooled = MetaScoreSet(
        studies=tuple(all_ids),
        n_total=sum(c.n_samples for c in contribs),
        window_bp=window_bp,
        variants=variants,
        cov=BandedMatrix(len(union), pooled_pairs),
    )
    aligned = tuple(
        AlignedStudy(
            study_id=c.study_ids[0],
            n_samples=c.n_samples,
            trait_var=c.source.trait_var,
            window_bp=c.window_bp,
            scores={k: e[4] for k, e in c.entries.items()},
            alt_af={k: e[0] for k, e in c.entries.items()},
            pairs=dict(c.pairs),
        )
        for c in contribs
        if isinstance(c.source, SummaryBlock)
    )
    return HarmonizeResult(pooled, aligned, tuple(warnings))


@dataclass(frozen=True)
class SingleVariantResult:
    """Meta-analysis of one variant: score test and effect estimate.

    A variant whose pooled variance is zero (monomorphic everywhere it was
    seen) is untestable: ``stat``, ``p``, ``beta`` and ``se`` are None.
    """

    key: VariantKey
    n_total: int
    n_studies: int
    alt_af: float
    score: float
    variance: float
    stat: float | None
    p: float | None
    beta: float | None
    se: float | None

    @property
    def testable(self) -> bool:
        return self.p is not None


def single_variant_meta(pooled: MetaScoreSet) -> tuple[SingleVariantResult, ...]:
    """Score test and Wald-style effect estimate per pooled variant.

    T = U / sqrt(V) with a two-sided normal p-value; beta = U / V with
    standard error 1 / sqrt(V).
    """
    out = []
    for i, v in enumerate(pooled.variants):
        var = pooled.cov.get(i, i)
        if var > 0.0:
            stat = v.score / np.sqrt(var)
            res = SingleVariantResult(
                key=v.key,
                n_total=v.n_total,
                n_studies=v.n_studies,
                alt_af=v.alt_af,
                score=v.score,
                variance=var,
                stat=float(stat),
                p=float(2.0 * ndtr(-abs(stat))),
                beta=float(v.score / var),
                se=float(1.0 / np.sqrt(var)),
            )
        else:
            res = SingleVariantResult(
                key=v.key,
                n_total=v.n_total,
                n_studies=v.n_studies,
                alt_af=v.alt_af,
                score=v.score,
                variance=var,
                stat=None,
                p=None,
                beta=None,
                se=None,
            )
        out.append(res)
    return tuple(out)


def genomic_control_lambda(p_values: Iterable[float]) -> float:
    """Median chi-square inflation factor of a collection of p-values."""
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        raise DataError("no p-values supplied")
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p > 1.0):
        raise DataError("p-values must lie in (0, 1]")
    observed = float(np.median(chi2.isf(p, 1)))
    return observed / float(chi2.ppf(0.5, 1))
