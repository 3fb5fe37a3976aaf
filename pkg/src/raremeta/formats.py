"""Text formats for sharing summary statistics and reading study inputs.

All files are UTF-8, tab-separated, with ``#``-prefixed header lines.  Real
numbers are serialized with ``%.17g`` so write -> parse -> write is
byte-identical.  Writers emit variant rows in canonical order and parsers for
the score/covariance formats reject files that are not sorted; parse errors
carry the source name and 1-based line number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import (
    BandedMatrix,
    DataError,
    GenotypeMatrix,
    GroupDefinition,
    ParseError,
    SummaryBlock,
    VariantKey,
    VariantSummary,
    order_variants,
)

_SCORE_COLUMNS = (
    "#CHROM", "POS", "REF", "ALT", "N_INF", "ALT_AF",
    "CALL_RATE", "HWE_P", "SCORE", "SQRT_V",
)
_COV_COLUMNS = ("#CHROM", "POS", "REF", "ALT", "PARTNER_POS", "VALUES")
_GROUP_COLUMNS = ("#GENE", "VARIANTS")
_VCF_FIXED = ("#CHROM", "POS", "ID", "REF", "ALT", "QUAL", "FILTER", "INFO", "FORMAT")

# relative slack when cross-checking SQRT_V against the covariance diagonal;
# generous against the double rounding sqrt -> %.17g -> square
_DIAG_RTOL = 1e-9


def fmt_float(x: float) -> str:
    """Canonical %.17g serialization used by every writer."""
    return format(float(x), ".17g")


def _parse_float(token: str, what: str, line_no: int, source: str) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not a number", line=line_no, source=source) from None
    if not np.isfinite(v):
        raise ParseError(f"{what} must be finite, got {token!r}", line=line_no, source=source)
    return v


def _parse_int(token: str, what: str, line_no: int, source: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not an integer", line=line_no, source=source) from None


def _parse_key(fields: Sequence[str], line_no: int, source: str) -> VariantKey:
    try:
        return VariantKey(fields[0], int(fields[1]), fields[2], fields[3])
    except (ValueError, TypeError) as exc:
        raise ParseError(str(exc), line=line_no, source=source) from None


class _Lines:
    """Iterator over non-blank lines that tracks 1-based line numbers."""

    def __init__(self, text: str, source: str):
        self.source = source
        self._items = [
            (no, line) for no, line in enumerate(text.split("\n"), start=1) if line.strip()
        ]
        self._pos = 0

    def __iter__(self):
        return self

    def __next__(self) -> tuple[int, list[str]]:
        if self._pos >= len(self._items):
            raise StopIteration
        no, line = self._items[self._pos]
        self._pos += 1
        return no, line.split("\t")

    def expect_header(self, tag: str) -> tuple[int, list[str]]:
        try:
            no, fields = next(self)
        except StopIteration:
            raise ParseError(f"missing {tag} header", source=self.source) from None
        if fields[0] != tag:
            raise ParseError(
                f"expected {tag} header, got {fields[0]!r}", line=no, source=self.source
            )
        return no, fields

    def expect_columns(self, columns: tuple[str, ...]) -> None:
        no, fields = self.expect_header(columns[0])
        if tuple(fields) != columns:
            raise ParseError(
                "column header does not match " + "\t".join(columns),
                line=no,
                source=self.source,
            )


class ScoreRow(NamedTuple):
    key: VariantKey
    n_informative: int
    alt_af: float
    call_rate: float
    hwe_p: float
    score: float
    sqrt_v: float


@dataclass(frozen=True)
class ScoreTable:
    """Parsed score file: study metadata plus one row per variant."""

    study_id: str
    n_samples: int
    trait_mean: float
    trait_var: float
    rows: tuple[ScoreRow, ...]


class CovRow(NamedTuple):
    key: VariantKey
    partner_pos: tuple[int, ...]
    values: tuple[float, ...]


@dataclass(frozen=True)
class CovTable:
    """Parsed covariance file: per anchor variant, its in-window partners.

    Partners are identified by position (the anchor's own position comes
    first, carrying the diagonal), which is why a study cannot share two
    variants at the same coordinate.
    """

    study_id: str
    window_bp: int
    rows: tuple[CovRow, ...]


def write_score_file(block: SummaryBlock) -> str:
    out = [
        f"#STUDY\t{block.study_id}",
        f"#N\t{block.n_samples}",
        f"#TRAIT_MEAN\t{fmt_float(block.trait_mean)}",
        f"#TRAIT_VAR\t{fmt_float(block.trait_var)}",
        "\t".join(_SCORE_COLUMNS),
    ]
    for i, v in enumerate(block.variants):
        k = v.key
        out.append(
            "\t".join(
                (
                    k.chrom,
                    str(k.pos),
                    k.ref,
                    k.alt,
                    str(v.n_informative),
                    fmt_float(v.alt_af),
                    fmt_float(v.call_rate),
                    fmt_float(v.hwe_p),
                    fmt_float(v.score),
                    fmt_float(np.sqrt(block.cov.get(i, i))),
                )
            )
        )
    return "\n".join(out) + "\n"


def parse_score_file(text: str, source: str = "<scores>") -> ScoreTable:
    lines = _Lines(text, source)
    _, study = lines.expect_header("#STUDY")
    if len(study) != 2 or not study[1]:
        raise ParseError("#STUDY header needs exactly one value", source=source)
    no, n_fields = lines.expect_header("#N")
    n_samples = _parse_int(n_fields[1], "#N", no, source) if len(n_fields) == 2 else 0
    if n_samples < 1:
        raise ParseError("#N must be a positive integer", line=no, source=source)
    no, tm = lines.expect_header("#TRAIT_MEAN")
    trait_mean = _parse_float(tm[1], "#TRAIT_MEAN", no, source)
    no, tv = lines.expect_header("#TRAIT_VAR")
    trait_var = _parse_float(tv[1], "#TRAIT_VAR", no, source)
    if trait_var <= 0:
        raise ParseError("#TRAIT_VAR must be positive", line=no, source=source)
    lines.expect_columns(_SCORE_COLUMNS)

    rows: list[ScoreRow] = []
    for no, fields in lines:
        if len(fields) != len(_SCORE_COLUMNS):
            raise ParseError(
                f"expected {len(_SCORE_COLUMNS)} columns, got {len(fields)}",
                line=no,
                source=source,
            )
        key = _parse_key(fields, no, source)
        n_inf = _parse_int(fields[4], "N_INF", no, source)
        af = _parse_float(fields[5], "ALT_AF", no, source)
        call = _parse_float(fields[6], "CALL_RATE", no, source)
        hwe = _parse_float(fields[7], "HWE_P", no, source)
        score = _parse_float(fields[8], "SCORE", no, source)
        sqrt_v = _parse_float(fields[9], "SQRT_V", no, source)
        if not 0 <= n_inf <= n_samples:
            raise ParseError(f"N_INF {n_inf} outside [0, {n_samples}]", line=no, source=source)
        if not 0.0 <= af <= 1.0:
            raise ParseError(f"ALT_AF {fields[5]} outside [0, 1]", line=no, source=source)
        if not 0.0 <= call <= 1.0:
            raise ParseError(f"CALL_RATE {fields[6]} outside [0, 1]", line=no, source=source)
        if not 0.0 < hwe <= 1.0:
            raise ParseError(f"HWE_P {fields[7]} outside (0, 1]", line=no, source=source)
        if sqrt_v < 0.0:
            raise ParseError("SQRT_V must be non-negative", line=no, source=source)
        if rows and not rows[-1].key.sort_key() < key.sort_key():
            raise ParseError(
                f"rows are not sorted: {key} after {rows[-1].key}", line=no, source=source
            )
        rows.append(ScoreRow(key, n_inf, af, call, hwe, score, sqrt_v))
    return ScoreTable(study[1], n_samples, trait_mean, trait_var, tuple(rows))


def write_cov_file(block: SummaryBlock) -> str:
    out = [
        f"#STUDY\t{block.study_id}",
        f"#WINDOW_BP\t{block.window_bp}",
        "\t".join(_COV_COLUMNS),
    ]
    keys = block.keys
    for i, k in enumerate(keys):
        partners = [j for j in range(i, len(keys)) if block.cov.has_pair(i, j)]
        out.append(
            "\t".join(
                (
                    k.chrom,
                    str(k.pos),
                    k.ref,
                    k.alt,
                    ",".join(str(keys[j].pos) for j in partners),
                    ",".join(fmt_float(block.cov.get(i, j)) for j in partners),
                )
            )
        )
    return "\n".join(out) + "\n"


def parse_cov_file(text: str, source: str = "<cov>") -> CovTable:
    lines = _Lines(text, source)
    _, study = lines.expect_header("#STUDY")
    if len(study) != 2 or not study[1]:
        raise ParseError("#STUDY header needs exactly one value", source=source)
    no, wf = lines.expect_header("#WINDOW_BP")
    window = _parse_int(wf[1], "#WINDOW_BP", no, source) if len(wf) == 2 else 0
    if window < 1:
        raise ParseError("#WINDOW_BP must be a positive integer", line=no, source=source)
    lines.expect_columns(_COV_COLUMNS)

    rows: list[CovRow] = []
    for no, fields in lines:
        if len(fields) != len(_COV_COLUMNS):
            raise ParseError(
                f"expected {len(_COV_COLUMNS)} columns, got {len(fields)}",
                line=no,
                source=source,
            )
        key = _parse_key(fields, no, source)
        partner_pos = tuple(
            _parse_int(tok, "PARTNER_POS", no, source) for tok in fields[4].split(",")
        )
        values = tuple(
            _parse_float(tok, "VALUES", no, source) for tok in fields[5].split(",")
        )
        if len(partner_pos) != len(values):
            raise ParseError(
                f"{len(partner_pos)} partner positions but {len(values)} values",
                line=no,
                source=source,
            )
        if partner_pos[0] != key.pos:
            raise ParseError(
                "first partner must be the anchor itself (diagonal entry)",
                line=no,
                source=source,
            )
        for a, b in zip(partner_pos, partner_pos[1:]):
            if b <= a:
                raise ParseError("partner positions must be strictly increasing", line=no, source=source)
        if partner_pos[-1] - key.pos >= window:
            raise ParseError(
                f"partner at {partner_pos[-1]} lies outside the {window} bp window",
                line=no,
                source=source,
            )
        if values[0] < 0.0:
            raise ParseError("diagonal covariance must be non-negative", line=no, source=source)
        if rows and not rows[-1].key.sort_key() < key.sort_key():
            raise ParseError(
                f"rows are not sorted: {key} after {rows[-1].key}", line=no, source=source
            )
        rows.append(CovRow(key, partner_pos, values))
    return CovTable(study[1], window, tuple(rows))


def assemble_block(scores: ScoreTable, cov: CovTable) -> SummaryBlock:
    """Join a parsed score table and covariance table into a summary block.

    Cross-checks that both tables describe the same study and variants, that
    every covariance partner resolves to a unique in-file position, and that
    SQRT_V in the score file is consistent with the covariance diagonal.
    """
    if scores.study_id != cov.study_id:
        raise DataError(
            f"score file is for study {scores.study_id!r} but covariance file "
            f"is for {cov.study_id!r}"
        )
    keys = [r.key for r in scores.rows]
    if [r.key for r in cov.rows] != keys:
        raise DataError("score and covariance files do not list the same variants")
    by_coord: dict[tuple[str, int], int] = {}
    for i, k in enumerate(keys):
        if (k.chrom, k.pos) in by_coord:
            raise DataError(
                f"two variants share position {k.chrom}:{k.pos}; covariance "
                "partners cannot be resolved"
            )
        by_coord[(k.chrom, k.pos)] = i

    pairs: dict[tuple[int, int], float] = {}
    for i, row in enumerate(cov.rows):
        anchor = row.key
        for pos, value in zip(row.partner_pos, row.values):
            j = by_coord.get((anchor.chrom, pos))
            if j is None:
                raise DataError(
                    f"covariance partner {anchor.chrom}:{pos} of {anchor} has no score row"
                )
            if j < i:
                raise DataError(
                    f"covariance row for {anchor} lists an earlier variant; "
                    "only the upper triangle may be stored"
                )
            pairs[(i, j)] = value
    for i, srow in enumerate(scores.rows):
        diag = pairs[(i, i)]
        if abs(srow.sqrt_v**2 - diag) > _DIAG_RTOL * max(diag, 1.0):
            raise DataError(
                f"SQRT_V for {srow.key} disagrees with the covariance diagonal "
                f"({srow.sqrt_v}**2 vs {diag})"
            )

    variants = tuple(
        VariantSummary(
            key=r.key,
            n_informative=r.n_informative,
            alt_af=r.alt_af,
            call_rate=r.call_rate,
            hwe_p=r.hwe_p,
            score=r.score,
        )
        for r in scores.rows
    )
    try:
        return SummaryBlock(
            study_id=scores.study_id,
            n_samples=scores.n_samples,
            trait_mean=scores.trait_mean,
            trait_var=scores.trait_var,
            variants=variants,
            cov=BandedMatrix(len(variants), pairs),
            window_bp=cov.window_bp,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from None


def read_block(score_text: str, cov_text: str, *, score_source: str = "<scores>",
               cov_source: str = "<cov>") -> SummaryBlock:
    """Parse and assemble a study's score and covariance files in one call."""
    return assemble_block(
        parse_score_file(score_text, score_source), parse_cov_file(cov_text, cov_source)
    )


def write_group_file(groups: Iterable[GroupDefinition]) -> str:
    out = ["\t".join(_GROUP_COLUMNS)]
    for g in sorted(groups, key=lambda g: g.gene):
        out.append(g.gene + "\t" + ",".join(str(k) for k in g.members))
    return "\n".join(out) + "\n"


def parse_group_file(text: str, source: str = "<groups>") -> tuple[GroupDefinition, ...]:
    lines = _Lines(text, source)
    lines.expect_columns(_GROUP_COLUMNS)
    groups: list[GroupDefinition] = []
    seen: set[str] = set()
    for no, fields in lines:
        if len(fields) != 2:
            raise ParseError(f"expected 2 columns, got {len(fields)}", line=no, source=source)
        gene = fields[0]
        if gene in seen:
            raise ParseError(f"duplicate group label {gene!r}", line=no, source=source)
        seen.add(gene)
        members = []
        for tok in fields[1].split(","):
            try:
                members.append(VariantKey.parse(tok))
            except ValueError as exc:
                raise ParseError(str(exc), line=no, source=source) from None
        try:
            groups.append(GroupDefinition(gene, tuple(members)))
        except ValueError as exc:
            raise ParseError(str(exc), line=no, source=source) from None
    return tuple(sorted(groups, key=lambda g: g.gene))


def _fmt_dosage(v: float) -> str:
    if np.isnan(v):
        return "."
    if v == np.rint(v):
        return str(int(v))
    return fmt_float(v)


def write_genotypes(genotypes: GenotypeMatrix, sample_ids: Sequence[str]) -> str:
    """Tabular dosage matrix: one row per variant, one column per sample."""
    if len(sample_ids) != genotypes.n_samples:
        raise DataError(
            f"{len(sample_ids)} sample ids for {genotypes.n_samples} genotype rows"
        )
    order = sorted(range(genotypes.n_variants), key=lambda j: genotypes.variants[j].sort_key())
    out = ["\t".join(("#CHROM", "POS", "REF", "ALT") + tuple(sample_ids))]
    for j in order:
        k = genotypes.variants[j]
        col = genotypes.entries[:, j]
        out.append(
            "\t".join((k.chrom, str(k.pos), k.ref, k.alt) + tuple(_fmt_dosage(v) for v in col))
        )
    return "\n".join(out) + "\n"


def _parse_genotypes_tabular(text: str, source: str) -> tuple[GenotypeMatrix, tuple[str, ...]]:
    lines = _Lines(text, source)
    no, header = lines.expect_header("#CHROM")
    if tuple(header[:4]) != ("#CHROM", "POS", "REF", "ALT"):
        raise ParseError("header must start with #CHROM POS REF ALT", line=no, source=source)
    sample_ids = tuple(header[4:])
    if not sample_ids:
        raise ParseError("no sample columns", line=no, source=source)
    if len(set(sample_ids)) != len(sample_ids):
        raise ParseError("duplicate sample ids", line=no, source=source)
    keys: list[VariantKey] = []
    rows: list[list[float]] = []
    for no, fields in lines:
        if len(fields) != 4 + len(sample_ids):
            raise ParseError(
                f"expected {4 + len(sample_ids)} columns, got {len(fields)}",
                line=no,
                source=source,
            )
        key = _parse_key(fields, no, source)
        dosages = []
        for tok in fields[4:]:
            if tok == ".":
                dosages.append(np.nan)
                continue
            v = _parse_float(tok, "dosage", no, source)
            if not 0.0 <= v <= 2.0:
                raise ParseError(f"dosage {tok} outside [0, 2]", line=no, source=source)
            dosages.append(v)
        keys.append(key)
        rows.append(dosages)
    if not keys:
        raise ParseError("no variant rows", source=source)
    if len(set(keys)) != len(keys):
        raise ParseError("duplicate variant rows", source=source)
    entries = np.array(rows, dtype=np.float64).T
    order = sorted(range(len(keys)), key=lambda j: keys[j].sort_key())
    return (
        GenotypeMatrix(tuple(keys[j] for j in order), entries[:, order]),
        sample_ids,
    )


def _gt_dosage(field: str, line_no: int, source: str) -> float:
    gt = field.split(":", 1)[0]
    alleles = gt.replace("|", "/").split("/")
    if "." in alleles:
        return np.nan
    total = 0.0
    for a in alleles:
        if a == "0":
            continue
        if a == "1":
            total += 1.0
        else:
            raise ParseError(
                f"unsupported allele index {a!r} in genotype {gt!r}",
                line=line_no,
                source=source,
            )
    return total


def _parse_genotypes_vcf(text: str, source: str) -> tuple[GenotypeMatrix, tuple[str, ...]]:
    sample_ids: tuple[str, ...] | None = None
    keys: list[VariantKey] = []
    rows: list[list[float]] = []
    for no, line in enumerate(text.split("\n"), start=1):
        if not line.strip() or line.startswith("##"):
            continue
        fields = line.split("\t")
        if line.startswith("#CHROM"):
            if tuple(fields[:9]) != _VCF_FIXED:
                raise ParseError("malformed #CHROM header", line=no, source=source)
            sample_ids = tuple(fields[9:])
            if not sample_ids:
                raise ParseError("VCF has no sample columns", line=no, source=source)
            if len(set(sample_ids)) != len(sample_ids):
                raise ParseError("duplicate sample ids", line=no, source=source)
            continue
        if sample_ids is None:
            raise ParseError("data line before #CHROM header", line=no, source=source)
        if len(fields) != 9 + len(sample_ids):
            raise ParseError(
                f"expected {9 + len(sample_ids)} columns, got {len(fields)}",
                line=no,
                source=source,
            )
        if "," in fields[4]:
            raise ParseError(
                "multi-allelic record; split it into bi-allelic rows first",
                line=no,
                source=source,
            )
        try:
            key = VariantKey(fields[0], int(fields[1]), fields[3], fields[4])
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), line=no, source=source) from None
        if not fields[8].split(":")[0] == "GT":
            raise ParseError("FORMAT must lead with GT", line=no, source=source)
        keys.append(key)
        rows.append([_gt_dosage(f, no, source) for f in fields[9:]])
    if sample_ids is None:
        raise ParseError("missing #CHROM header", source=source)
    if not keys:
        raise ParseError("no variant records", source=source)
    if len(set(keys)) != len(keys):
        raise ParseError("duplicate variant records", source=source)
    entries = np.array(rows, dtype=np.float64).T
    order = sorted(range(len(keys)), key=lambda j: keys[j].sort_key())
    return (
        GenotypeMatrix(tuple(keys[j] for j in order), entries[:, order]),
        sample_ids,
    )


def parse_genotypes(
    text: str, fmt: str = "tabular", source: str = "<genotypes>"
) -> tuple[GenotypeMatrix, tuple[str, ...]]:
    """Read genotypes from tabular dosage or VCF text.

    Variants are returned in canonical order regardless of file order.  VCF
    support is deliberately minimal: bi-allelic GT-first records only, with
    any half-missing call treated as missing.
    """
    if fmt == "tabular":
        return _parse_genotypes_tabular(text, source)
    if fmt == "vcf":
        return _parse_genotypes_vcf(text, source)
    raise ValueError(f"unknown genotype format {fmt!r}")


def write_phenotype_file(
    sample_ids: Sequence[str],
    trait: Sequence[float],
    covariates: np.ndarray | None = None,
    covariate_labels: Sequence[str] = (),
) -> str:
    trait = np.asarray(trait, dtype=np.float64)
    if len(sample_ids) != trait.size:
        raise DataError(f"{len(sample_ids)} sample ids for {trait.size} trait values")
    header = ["#SAMPLE", "TRAIT"]
    cov = None
    if covariates is not None:
        cov = np.asarray(covariates, dtype=np.float64)
        labels = list(covariate_labels) or [f"covariate_{i}" for i in range(cov.shape[1])]
        header += labels
    out = ["\t".join(header)]
    for i, sid in enumerate(sample_ids):
        fields = [str(sid), fmt_float(trait[i])]
        if cov is not None:
            fields += [fmt_float(v) for v in cov[i]]
        out.append("\t".join(fields))
    return "\n".join(out) + "\n"


def parse_phenotype_file(
    text: str, source: str = "<phenotypes>"
) -> tuple[tuple[str, ...], np.ndarray, np.ndarray | None, tuple[str, ...]]:
    """Returns (sample_ids, trait, covariates-or-None, covariate_labels)."""
    lines = _Lines(text, source)
    no, header = lines.expect_header("#SAMPLE")
    if len(header) < 2 or header[1] != "TRAIT":
        raise ParseError("header must start with #SAMPLE TRAIT", line=no, source=source)
    labels = tuple(header[2:])
    ids: list[str] = []
    trait: list[float] = []
    cov_rows: list[list[float]] = []
    for no, fields in lines:
        if len(fields) != 2 + len(labels):
            raise ParseError(
                f"expected {2 + len(labels)} columns, got {len(fields)}",
                line=no,
                source=source,
            )
        ids.append(fields[0])
        trait.append(_parse_float(fields[1], "TRAIT", no, source))
        cov_rows.append([_parse_float(t, "covariate", no, source) for t in fields[2:]])
    if not ids:
        raise ParseError("no sample rows", source=source)
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate sample ids", source=source)
    cov = np.array(cov_rows, dtype=np.float64) if labels else None
    return tuple(ids), np.array(trait, dtype=np.float64), cov, labels
