"""Core value types shared by every stage of the pipeline.

Variant identity, genotype/phenotype containers, and the per-study summary
block (score vector plus banded covariance) that studies exchange instead of
individual-level data.  All containers are immutable after construction and
validate their own invariants eagerly, so downstream code can assume clean
inputs.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Mapping, Sequence

import numpy as np

#: Marker for an unobserved genotype dosage.
MISSING = float("nan")

_ALLELE_RE = re.compile(r"^[ACGT]+$")

# Slack allowed when checking |V_ij| <= sqrt(V_ii * V_jj).
_CAUCHY_SCHWARZ_SLACK = 1e-9


class RaremetaError(Exception):
    """Base class for errors raised by this package."""


class DataError(RaremetaError):
    """Input data violates a documented precondition."""


class ParseError(DataError):
    """A text input could not be parsed.

    Carries enough location information for a useful CLI diagnostic.
    """

    def __init__(self, message: str, *, line: int | None = None, source: str = ""):
        self.line = line
        self.source = source
        prefix = ""
        if source:
            prefix += source
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


def is_missing(value: float) -> bool:
    """True when ``value`` is the missing-dosage marker."""
    return math.isnan(value)


def _chrom_sort_key(chrom: str) -> tuple:
    # Numeric labels sort numerically and before non-numeric ones, so
    # "2" < "10" < "X" regardless of string length.
    try:
        return (0, int(chrom), "")
    except ValueError:
        return (1, 0, chrom)


@total_ordering
@dataclass(frozen=True)
class VariantKey:
    """Identity of a variant: chromosome, position, reference and alternate allele.

    Keys are totally ordered by (chromosome, position, ref, alt) where
    chromosome labels compare numerically when both parse as integers and
    lexicographically otherwise.
    """

    chrom: str
    pos: int
    ref: str
    alt: str

    def __post_init__(self):
        if not self.chrom or re.search(r"\s|:", self.chrom):
            raise ValueError(f"invalid chromosome label {self.chrom!r}")
        if not isinstance(self.pos, int) or self.pos <= 0:
            raise ValueError(f"position must be a positive integer, got {self.pos!r}")
        for name, allele in (("ref", self.ref), ("alt", self.alt)):
            if not _ALLELE_RE.match(allele):
                raise ValueError(f"{name} allele {allele!r} is not a non-empty ACGT string")
        if self.ref == self.alt:
            raise ValueError(f"ref and alt alleles are identical ({self.ref})")

    def sort_key(self) -> tuple:
        return (_chrom_sort_key(self.chrom), self.pos, self.ref, self.alt)

    def __lt__(self, other: "VariantKey") -> bool:
        if not isinstance(other, VariantKey):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"{self.chrom}:{self.pos}:{self.ref}:{self.alt}"

    @classmethod
    def parse(cls, text: str) -> "VariantKey":
        """Parse a ``chrom:pos:ref:alt`` string."""
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"expected chrom:pos:ref:alt, got {text!r}")
        chrom, pos, ref, alt = parts
        try:
            pos_i = int(pos)
        except ValueError:
            raise ValueError(f"non-integer position in {text!r}") from None
        return cls(chrom, pos_i, ref, alt)

    def flipped(self) -> "VariantKey":
        """The same site with ref and alt swapped."""
        return VariantKey(self.chrom, self.pos, self.alt, self.ref)


def order_variants(keys: Iterable[VariantKey]) -> list[VariantKey]:
    """Sort variant keys into canonical order (idempotent, stable)."""
    return sorted(keys, key=VariantKey.sort_key)


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class GenotypeMatrix:
    """Dosage matrix for one study: samples in rows, variants in columns.

    Entries are alternate-allele dosages in [0, 2]; NaN marks a missing
    genotype.  Column means over observed entries are computed once at
    construction.
    """

    variants: tuple[VariantKey, ...]
    entries: np.ndarray
    col_means: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        variants = tuple(self.variants)
        object.__setattr__(self, "variants", variants)
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValueError("genotype entries must be a 2-D array")
        if entries.shape[1] != len(variants):
            raise ValueError(
                f"{entries.shape[1]} columns but {len(variants)} variant keys"
            )
        if len(set(variants)) != len(variants):
            raise ValueError("duplicate variant keys in genotype matrix")
        observed = entries[~np.isnan(entries)]
        if observed.size and (observed.min() < 0.0 or observed.max() > 2.0):
            raise ValueError("observed dosages must lie in [0, 2]")
        object.__setattr__(self, "entries", _readonly(entries))
        observed_counts = (~np.isnan(entries)).sum(axis=0)
        with np.errstate(invalid="ignore"):
            means = np.where(
                observed_counts > 0,
                np.nansum(entries, axis=0) / np.maximum(observed_counts, 1),
                np.nan,
            )
        object.__setattr__(self, "col_means", _readonly(means))

    @property
    def n_samples(self) -> int:
        return self.entries.shape[0]

    @property
    def n_variants(self) -> int:
        return self.entries.shape[1]

    def has_missing(self) -> bool:
        return bool(np.isnan(self.entries).any())

    def __eq__(self, other) -> bool:
        if not isinstance(other, GenotypeMatrix):
            return NotImplemented
        return self.variants == other.variants and np.array_equal(
            self.entries, other.entries, equal_nan=True
        )

    def __hash__(self):  # frozen dataclass with arrays: identity hash
        return id(self)


@dataclass(frozen=True)
class PhenotypeVector:
    """A quantitative trait (or residual) vector with its first two moments.

    ``variance`` uses the maximum-likelihood denominator N, matching the
    variance that scales score covariances.
    """

    values: np.ndarray
    mean: float
    variance: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("phenotype values must be a non-empty 1-D array")
        if not np.isfinite(values).all():
            raise ValueError("phenotype values must be finite")
        object.__setattr__(self, "values", _readonly(values))
        mean = float(np.mean(values))
        var = float(np.mean((values - mean) ** 2))
        scale = max(abs(mean), 1.0)
        if abs(mean - self.mean) > 1e-12 * scale:
            raise ValueError("stored mean does not match the values")
        if abs(var - self.variance) > 1e-12 * max(var, 1e-300):
            raise ValueError("stored variance does not match the values")

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "PhenotypeVector":
        arr = np.asarray(values, dtype=np.float64)
        mean = float(np.mean(arr))
        var = float(np.mean((arr - mean) ** 2))
        return cls(arr, mean, var)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def degenerate(self) -> bool:
        """True when every value is identical (zero variance)."""
        return self.variance == 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, PhenotypeVector):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and self.mean == other.mean
            and self.variance == other.variance
        )

    def __hash__(self):
        return id(self)


class BandedMatrix:
    """Sparse symmetric matrix storing only upper-triangle pairs (i <= j).

    Used for score covariances, where only pairs of nearby variants are
    retained.  Every diagonal entry must be present; off-diagonal entries
    absent from ``pairs`` are treated as zero by :meth:`dense`.
    """

    __slots__ = ("size", "_pairs")

    def __init__(self, size: int, pairs: Mapping[tuple[int, int], float]):
        if size < 0:
            raise ValueError("size must be non-negative")
        clean: dict[tuple[int, int], float] = {}
        for (i, j), value in pairs.items():
            if not (0 <= i <= j < size):
                raise ValueError(f"pair index ({i}, {j}) out of range for size {size}")
            v = float(value)
            if not math.isfinite(v):
                raise ValueError(f"covariance entry ({i}, {j}) is not finite")
            clean[(i, j)] = v
        for i in range(size):
            if (i, i) not in clean:
                raise ValueError(f"diagonal entry {i} missing")
            if clean[(i, i)] < 0.0:
                raise ValueError(f"diagonal entry {i} is negative")
        for (i, j), v in clean.items():
            if i != j:
                bound = math.sqrt(clean[(i, i)] * clean[(j, j)]) + _CAUCHY_SCHWARZ_SLACK
                if abs(v) > bound:
                    raise ValueError(
                        f"entry ({i}, {j}) = {v} violates the Cauchy-Schwarz bound {bound}"
                    )
        self.size = size
        self._pairs = clean

    @property
    def pairs(self) -> dict[tuple[int, int], float]:
        return dict(self._pairs)

    def get(self, i: int, j: int, default: float = 0.0) -> float:
        if i > j:
            i, j = j, i
        return self._pairs.get((i, j), default)

    def has_pair(self, i: int, j: int) -> bool:
        if i > j:
            i, j = j, i
        return (i, j) in self._pairs

    def diagonal(self) -> np.ndarray:
        return np.array([self._pairs[(i, i)] for i in range(self.size)])

    def dense(self, indices: Sequence[int] | None = None) -> np.ndarray:
        """Symmetric dense submatrix over ``indices`` (default: everything).

        Pairs not stored are filled with zero.
        """
        idx = list(range(self.size)) if indices is None else list(indices)
        out = np.zeros((len(idx), len(idx)))
        for a, i in enumerate(idx):
            for b, j in enumerate(idx[a:], start=a):
                out[a, b] = out[b, a] = self.get(i, j)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, BandedMatrix):
            return NotImplemented
        return self.size == other.size and self._pairs == other._pairs

    def __repr__(self) -> str:
        return f"BandedMatrix(size={self.size}, stored={len(self._pairs)})"


@dataclass(frozen=True)
class VariantSummary:
    """Per-variant summary statistics within one study."""

    key: VariantKey
    n_informative: int
    alt_af: float
    call_rate: float
    hwe_p: float
    score: float

    def __post_init__(self):
        if self.n_informative < 0:
            raise ValueError("n_informative must be non-negative")
        if not 0.0 <= self.alt_af <= 1.0:
            raise ValueError(f"alt_af {self.alt_af} outside [0, 1] for {self.key}")
        if not 0.0 <= self.call_rate <= 1.0:
            raise ValueError(f"call_rate {self.call_rate} outside [0, 1] for {self.key}")
        if not 0.0 < self.hwe_p <= 1.0:
            raise ValueError(f"hwe_p {self.hwe_p} outside (0, 1] for {self.key}")
        if not math.isfinite(self.score):
            raise ValueError(f"score is not finite for {self.key}")


@dataclass(frozen=True)
class SummaryBlock:
    """Everything one study shares: per-variant scores plus banded covariance.

    Variants are kept in canonical order and must have unique (chrom, pos)
    coordinates, since the covariance wire format identifies partners by
    position.  Covariance pairs are stored only for same-chromosome variants
    less than ``window_bp`` apart; the diagonal is always stored.
    """

    study_id: str
    n_samples: int
    trait_mean: float
    trait_var: float
    variants: tuple[VariantSummary, ...]
    cov: BandedMatrix
    window_bp: int = 1_000_000

    def __post_init__(self):
        if not re.match(r"^\S+$", self.study_id):
            raise ValueError(f"study id {self.study_id!r} must be non-empty without whitespace")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not math.isfinite(self.trait_mean):
            raise ValueError("trait_mean must be finite")
        if not (math.isfinite(self.trait_var) and self.trait_var > 0.0):
            raise ValueError("trait_var must be finite and positive")
        if self.window_bp <= 0:
            raise ValueError("window_bp must be positive")
        variants = tuple(self.variants)
        object.__setattr__(self, "variants", variants)
        keys = [v.key for v in variants]
        if keys != order_variants(keys):
            raise ValueError("variants must be in canonical sorted order")
        coords = [(k.chrom, k.pos) for k in keys]
        if len(set(coords)) != len(coords):
            raise ValueError(
                "two variants share a (chrom, pos) coordinate; "
                "split multi-allelic sites are not representable"
            )
        for v in variants:
            if v.n_informative > self.n_samples:
                raise ValueError(f"n_informative exceeds n_samples for {v.key}")
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
        for i, v in enumerate(variants):
            if v.alt_af in (0.0, 1.0) and self.cov.get(i, i) != 0.0:
                raise ValueError(f"monomorphic variant {v.key} has nonzero variance")

    @property
    def keys(self) -> tuple[VariantKey, ...]:
        return tuple(v.key for v in self.variants)

    @property
    def n_variants(self) -> int:
        return len(self.variants)

    def index(self) -> dict[VariantKey, int]:
        """Mapping from variant key to its column index."""
        return {v.key: i for i, v in enumerate(self.variants)}

    def scores(self) -> np.ndarray:
        return np.array([v.score for v in self.variants])


@dataclass(frozen=True)
class GroupDefinition:
    """A named set of variants tested together (typically a gene).

    Members are deduplicated and stored in canonical order, so two
    definitions listing the same variants compare equal regardless of the
    order they were written in.
    """

    gene: str
    members: tuple[VariantKey, ...]

    def __post_init__(self):
        if not re.match(r"^\S+$", self.gene):
            raise ValueError(f"gene label {self.gene!r} must be non-empty without whitespace")
        members = order_variants(set(self.members))
        if not members:
            raise ValueError(f"group {self.gene} has no members")
        object.__setattr__(self, "members", tuple(members))

    @property
    def n_members(self) -> int:
        return len(self.members)
