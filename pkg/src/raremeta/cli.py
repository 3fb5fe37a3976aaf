"""Command-line interface.

Four subcommands mirror the library's stages:

* ``summarize`` — individual-level data in, score + covariance files out.
* ``meta`` — score/covariance files from several studies in, single-variant
  and gene-level meta-analysis tables out.
* ``cond`` — like ``meta`` but conditioning on a list of known variants.
* ``simulate`` — synthetic multi-study genotype/phenotype files.

Every run writes ``<prefix>.log`` collecting harmonization and analysis
warnings.  Exit codes: 0 success, 1 usage error, 2 malformed or inconsistent
input data.  All randomized steps derive their streams from one seed
(``--seed``, defaulting to ``$RAREMETA_SEED`` or 0), so outputs are
reproducible byte for byte, including under ``--threads``.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from . import conditional, datagen, formats, genetests, meta, summarize
from .core import DataError, GenotypeMatrix, GroupDefinition, RaremetaError, VariantKey


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog.split()[0] + f": error: {message}") from None


def _na(value, fmt: str = ".10g") -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return format(value, fmt)
    return str(value)


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("RAREMETA_SEED", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"RAREMETA_SEED={env!r} is not an integer") from None
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="raremeta", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output file prefix")
        p.add_argument("--seed", type=int, default=None,
                       help="base RNG seed (default: $RAREMETA_SEED or 0)")

    p = sub.add_parser("summarize", help="compute one study's score/covariance files")
    common(p)
    p.add_argument("--genotypes", required=True)
    p.add_argument("--format", choices=("tabular", "vcf"), default="tabular")
    p.add_argument("--phenotypes", required=True)
    p.add_argument("--study-id", required=True)
    p.add_argument("--window-bp", type=int, default=1_000_000)
    p.add_argument("--no-inverse-normal", action="store_true",
                   help="analyze raw residuals instead of rank-normalized ones")

    def analysis_flags(p, tests_default, tests_help):
        p.add_argument("--scores", nargs="+", required=True, metavar="FILE")
        p.add_argument("--covs", nargs="+", required=True, metavar="FILE")
        p.add_argument("--groups")
        p.add_argument("--tests", default=tests_default, help=tests_help)
        p.add_argument("--maf-caps", default="0.01,0.05")
        p.add_argument("--weights", choices=("uniform", "mb"), default="uniform")
        p.add_argument("--empirical", action="store_true",
                       help="add adaptive Monte-Carlo p-values")
        p.add_argument("--exceedances", type=int, default=100)
        p.add_argument("--max-draws", type=int, default=40_000_000)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("meta", help="meta-analyze score/covariance files")
    common(p)
    analysis_flags(p, "burden,vt,skat", "comma list from burden,vt,skat,fisher,minp")
    p.add_argument("--one-sided-vt", action="store_true")
    p.add_argument("--vt-threshold", choices=("maf", "count"), default="maf")

    p = sub.add_parser("cond", help="conditional analysis on known variants")
    common(p)
    analysis_flags(p, "burden,skat", "comma list from burden,skat")
    p.add_argument("--condition", required=True,
                   help="comma list of variants chrom:pos:ref:alt")

    p = sub.add_parser("simulate", help="generate synthetic study data")
    common(p)
    p.add_argument("--studies", type=int, default=3)
    p.add_argument("--samples", default="1000",
                   help="per-study sample sizes (one value or one per study)")
    p.add_argument("--variants", type=int, default=50)
    p.add_argument("--causal-fraction", type=float, default=0.5)
    p.add_argument("--effect", choices=("fixed", "mixed", "random"), default="fixed")
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--fraction-positive", type=float, default=0.5)
    p.add_argument("--effect-sd", type=float, default=0.25)
    p.add_argument("--maf-range", default=None, help="causal MAF range lo,hi")
    p.add_argument("--missing-rate", type=float, default=0.0)
    return parser


def _load_blocks(score_paths, cov_paths):
    if len(score_paths) != len(cov_paths):
        raise UsageError(
            f"{len(score_paths)} score files but {len(cov_paths)} covariance files"
        )
    blocks = []
    for spath, cpath in zip(score_paths, cov_paths):
        stext = Path(spath).read_text(encoding="utf-8")
        ctext = Path(cpath).read_text(encoding="utf-8")
        blocks.append(
            formats.read_block(stext, ctext, score_source=spath, cov_source=cpath)
        )
    return blocks


def _load_groups(path) -> tuple[GroupDefinition, ...]:
    if path is None:
        return ()
    return formats.parse_group_file(Path(path).read_text(encoding="utf-8"), source=path)


_SV_HEADER = (
    "#CHROM", "POS", "REF", "ALT", "N_TOTAL", "N_STUDIES", "ALT_AF",
    "SCORE", "VARIANCE", "STAT", "P", "BETA", "SE",
)


def _write_single_variant(path: Path, results) -> None:
    lines = ["\t".join(_SV_HEADER)]
    for r in results:
        k = r.key
        lines.append(
            "\t".join(
                (
                    k.chrom, str(k.pos), k.ref, k.alt,
                    str(r.n_total), str(r.n_studies),
                    _na(r.alt_af), _na(r.score), _na(r.variance),
                    _na(r.stat), _na(r.p), _na(r.beta), _na(r.se),
                )
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_GENE_HEADER = (
    "#GENE", "TEST", "MAF_CAP", "N_VARIANTS", "MAF_CUTOFF", "STAT", "DIRECTION",
    "P_ANALYTIC", "P_EMPIRICAL", "EXCEEDANCES", "DRAWS", "EFFECT", "DIAGNOSTICS",
)


def _write_gene_table(path: Path, results) -> None:
    lines = ["\t".join(_GENE_HEADER)]
    for r in results:
        lines.append(
            "\t".join(
                (
                    r.gene, r.test, _na(r.maf_cap), str(r.n_variants),
                    _na(r.maf_cutoff), _na(r.statistic), str(r.direction),
                    _na(r.p_analytic), _na(r.p_empirical),
                    _na(r.exceedances), _na(r.draws), _na(r.effect),
                    ";".join(r.diagnostics) or ".",
                )
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_tests(text: str, allowed: tuple[str, ...]) -> list[str]:
    tests = [t.strip() for t in text.split(",") if t.strip()]
    if not tests:
        raise UsageError("no tests requested")
    bad = [t for t in tests if t not in allowed]
    if bad:
        raise UsageError(
            f"unsupported test(s) {', '.join(bad)}; choose from {', '.join(allowed)}"
        )
    return tests


def _maf_caps(text: str) -> list[float]:
    caps = _csv_floats(text)
    if not caps or any(not 0.0 < c <= 0.5 for c in caps):
        raise UsageError("--maf-caps values must lie in (0, 0.5]")
    return sorted(set(caps))


def _run_summarize(args, log: list[str]) -> None:
    seed = _resolve_seed(args.seed)  # unused today; summarize is deterministic
    del seed
    gtext = Path(args.genotypes).read_text(encoding="utf-8")
    genotypes, geno_ids = formats.parse_genotypes(gtext, args.format, source=args.genotypes)
    ptext = Path(args.phenotypes).read_text(encoding="utf-8")
    pheno_ids, trait, cov, labels = formats.parse_phenotype_file(ptext, source=args.phenotypes)

    order = {sid: i for i, sid in enumerate(pheno_ids)}
    missing = [sid for sid in geno_ids if sid not in order]
    if missing:
        raise DataError(
            f"{len(missing)} genotyped sample(s) missing from the phenotype file "
            f"(first: {missing[0]})"
        )
    extra = len(pheno_ids) - len(geno_ids)
    if extra:
        log.append(f"ignored {extra} phenotype row(s) without genotypes")
    sel = [order[sid] for sid in geno_ids]
    trait = trait[sel]
    covariates = (
        summarize.CovariateMatrix(cov[sel], labels) if cov is not None else None
    )

    block, dropped = summarize.summarize_study(
        genotypes,
        trait,
        covariates,
        study_id=args.study_id,
        window_bp=args.window_bp,
        inverse_normal=not args.no_inverse_normal,
    )
    for key in dropped:
        log.append(f"dropped {key}: no observed genotypes")
    out = Path(args.out)
    Path(f"{out}.scores.txt").write_text(formats.write_score_file(block), encoding="utf-8")
    Path(f"{out}.cov.txt").write_text(formats.write_cov_file(block), encoding="utf-8")


def _gene_results(args, pooled, aligned, groups, tests, caps, seed, extra_kwargs):
    def one(group):
        return genetests.run_gene_tests(
            pooled,
            [group],
            tests=tests,
            maf_caps=caps,
            weight_scheme=args.weights,
            aligned=aligned,
            empirical=args.empirical,
            mc_target_exceedances=args.exceedances,
            mc_max_draws=args.max_draws,
            seed=seed,
            **extra_kwargs,
        )

    ordered = sorted(groups, key=lambda g: g.gene)
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            chunks = list(pool.map(one, ordered))
    else:
        chunks = [one(g) for g in ordered]
    return [r for chunk in chunks for r in chunk]


def _run_meta(args, log: list[str]) -> None:
    seed = _resolve_seed(args.seed)
    tests = _parse_tests(args.tests, ("burden", "vt", "skat", "fisher", "minp"))
    caps = _maf_caps(args.maf_caps)
    blocks = _load_blocks(args.scores, args.covs)
    groups = _load_groups(args.groups)

    res = meta.harmonize(blocks)
    log.extend(res.warnings)
    sv = meta.single_variant_meta(res.pooled)
    out = Path(args.out)
    _write_single_variant(Path(f"{out}.singlevariant.txt"), sv)
    testable = [r.p for r in sv if r.p is not None]
    if testable:
        log.append(
            f"genomic control lambda: {meta.genomic_control_lambda(testable):.6g} "
            f"over {len(testable)} testable variants"
        )

    if groups:
        results = _gene_results(
            args, res.pooled, res.aligned, groups, tests, caps, seed,
            {"one_sided_vt": args.one_sided_vt, "vt_threshold_on": args.vt_threshold},
        )
        _write_gene_table(Path(f"{out}.genes.txt"), results)
    elif any(t in tests for t in ("burden", "vt", "skat", "fisher", "minp")) and args.groups is None:
        log.append("no --groups file: gene-level tests skipped")


def _parse_condition(text: str) -> list[VariantKey]:
    keys = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            keys.append(VariantKey.parse(tok))
        except ValueError as exc:
            raise UsageError(f"bad --condition entry {tok!r}: {exc}") from None
    if not keys:
        raise UsageError("--condition lists no variants")
    if len({k.chrom for k in keys}) > 1:
        raise UsageError("--condition variants must share one chromosome")
    return keys


def _run_cond(args, log: list[str]) -> None:
    seed = _resolve_seed(args.seed)
    tests = _parse_tests(args.tests, ("burden", "skat"))
    caps = _maf_caps(args.maf_caps)
    zkeys = _parse_condition(args.condition)
    blocks = _load_blocks(args.scores, args.covs)
    groups = _load_groups(args.groups)

    res = meta.harmonize(blocks)
    log.extend(res.warnings)
    pooled = res.pooled
    min_window = min(b.window_bp for b in blocks)

    def in_band(key: VariantKey) -> bool:
        return all(
            key.chrom == z.chrom and abs(key.pos - z.pos) < min_window for z in zkeys
        )

    zset = set(zkeys)
    sv_keys = [k for k in pooled.keys if k not in zset and in_band(k)]
    out = Path(args.out)
    if sv_keys:
        cb = conditional.condition(blocks, sv_keys, zkeys)
        log.extend(w for w in cb.warnings if w not in res.warnings)
        rows = []
        for i, key in enumerate(cb.test_keys):
            var = float(cb.cov[i, i])
            pi = pooled.index()[key]
            mv = pooled.variants[pi]
            if var > 0.0:
                stat = float(cb.score[i] / np.sqrt(var))
                rows.append(
                    meta.SingleVariantResult(
                        key=key, n_total=mv.n_total, n_studies=mv.n_studies,
                        alt_af=mv.alt_af, score=float(cb.score[i]), variance=var,
                        stat=stat, p=float(2.0 * ndtr(-abs(stat))),
                        beta=float(cb.score[i] / var), se=float(1.0 / np.sqrt(var)),
                    )
                )
            else:
                rows.append(
                    meta.SingleVariantResult(
                        key=key, n_total=mv.n_total, n_studies=mv.n_studies,
                        alt_af=mv.alt_af, score=float(cb.score[i]), variance=var,
                        stat=None, p=None, beta=None, se=None,
                    )
                )
        _write_single_variant(Path(f"{out}.singlevariant.txt"), rows)
    else:
        log.append("no variants fall inside the conditioning window")
        _write_single_variant(Path(f"{out}.singlevariant.txt"), [])

    if groups:
        results = []
        for group in sorted(groups, key=lambda g: g.gene):
            for cap in caps:
                idx = genetests.selected_variants(pooled, group, cap)
                keys = [pooled.variants[i].key for i in idx if pooled.variants[i].key not in zset]
                if not keys:
                    log.append(
                        f"{group.gene} (cap {cap:g}): no qualifying variants; skipped"
                    )
                    continue
                outside = [k for k in keys if not in_band(k)]
                if outside:
                    log.append(
                        f"{group.gene} (cap {cap:g}): {outside[0]} is outside the "
                        "conditioning window; gene skipped"
                    )
                    continue
                cb = conditional.condition(blocks, keys, zkeys)
                w = cb.weights(args.weights)
                mc = (
                    genetests.McConfig(
                        target_exceedances=args.exceedances,
                        max_draws=args.max_draws,
                        seed=genetests.derive_gene_seed(seed, group.gene, "mc"),
                    )
                    if args.empirical
                    else None
                )
                if "burden" in tests:
                    results.append(
                        conditional.conditional_burden(
                            cb, group.gene, weights=w, empirical=mc, maf_cap=cap
                        )
                    )
                if "skat" in tests:
                    kernel = (
                        genetests.KernelSpec.from_weights(w)
                        if args.weights != "uniform"
                        else None
                    )
                    results.append(
                        conditional.conditional_skat(
                            cb, group.gene, kernel=kernel, empirical=mc, maf_cap=cap
                        )
                    )
        torder = {"burden": 0, "skat": 1}
        results.sort(key=lambda r: (r.gene, torder[r.test], r.maf_cap))
        _write_gene_table(Path(f"{out}.genes.txt"), results)


def _run_simulate(args, log: list[str]) -> None:
    seed = _resolve_seed(args.seed)
    if args.studies < 1:
        raise UsageError("--studies must be positive")
    sizes = _csv_ints(args.samples)
    if len(sizes) == 1:
        sizes = sizes * args.studies
    if len(sizes) != args.studies:
        raise UsageError(f"--samples lists {len(sizes)} values for {args.studies} studies")
    if any(n < 2 for n in sizes):
        raise UsageError("every study needs at least 2 samples")
    if not 0.0 <= args.missing_rate < 1.0:
        raise UsageError("--missing-rate must lie in [0, 1)")
    maf_range = None
    if args.maf_range:
        lo_hi = _csv_floats(args.maf_range)
        if len(lo_hi) != 2:
            raise UsageError("--maf-range needs exactly lo,hi")
        maf_range = (lo_hi[0], lo_hi[1])
    if args.effect == "fixed":
        effect = datagen.FixedEffects(args.delta)
    elif args.effect == "mixed":
        effect = datagen.MixedSigns(args.delta, args.fraction_positive)
    else:
        effect = datagen.RandomEffects(0.0, args.effect_sd)

    out = Path(args.out)
    all_keys = None
    for k, n in enumerate(sizes, start=1):
        gseed = genetests.derive_gene_seed(seed, f"study-{k}", "geno")
        genotypes = datagen.gen_genotypes(n, args.variants, seed=gseed)
        if args.missing_rate > 0.0:
            rng = np.random.default_rng(genetests.derive_gene_seed(seed, f"study-{k}", "miss"))
            entries = np.array(genotypes.entries)
            mask = rng.random(entries.shape) < args.missing_rate
            entries[mask] = np.nan
            genotypes = GenotypeMatrix(genotypes.variants, entries)
        try:
            model = datagen.PhenoModel(
                causal_fraction=args.causal_fraction,
                effect=effect,
                maf_range=maf_range,
                seed=genetests.derive_gene_seed(seed, f"study-{k}", "pheno"),
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        trait, causal, effects = datagen.gen_phenotypes(genotypes, model)
        ids = [f"S{k}_{i:05d}" for i in range(n)]
        Path(f"{out}.study{k}.genotypes.txt").write_text(
            formats.write_genotypes(genotypes, ids), encoding="utf-8"
        )
        Path(f"{out}.study{k}.phenotypes.txt").write_text(
            formats.write_phenotype_file(ids, trait), encoding="utf-8"
        )
        log.append(
            f"study {k}: {n} samples, causal variants "
            + ",".join(str(genotypes.variants[i]) for i in causal)
        )
        if all_keys is None:
            all_keys = genotypes.variants
    group = GroupDefinition("GENE1", tuple(all_keys))
    Path(f"{out}.groups.txt").write_text(formats.write_group_file([group]), encoding="utf-8")


_RUNNERS = {
    "summarize": _run_summarize,
    "meta": _run_meta,
    "cond": _run_cond,
    "simulate": _run_simulate,
}


def run(args: argparse.Namespace) -> int:
    """Execute a parsed command; returns the process exit code."""
    log: list[str] = [f"# raremeta {args.command}"]
    try:
        _RUNNERS[args.command](args, log)
    except UsageError as exc:
        print(f"raremeta {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except RaremetaError as exc:
        print(f"raremeta {args.command}: {exc}", file=sys.stderr)
        Path(f"{args.out}.log").write_text("\n".join(log + [f"error: {exc}"]) + "\n", encoding="utf-8")
        return 2
    except OSError as exc:
        print(f"raremeta {args.command}: {exc}", file=sys.stderr)
        return 2
    Path(f"{args.out}.log").write_text("\n".join(log) + "\n", encoding="utf-8")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        return 0 if exc.code in (0, None) else 1
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
