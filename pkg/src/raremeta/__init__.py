"""Rare-variant meta-analysis from study-level score summaries.

Studies share, per variant, a score statistic and a banded covariance matrix
computed on a quantitative trait; this package pools those summaries across
studies and runs single-variant, burden, variable-threshold, and
variance-component (kernel) tests — with analytic and adaptive Monte-Carlo
p-values, conditional analysis on known signals, and a command-line
interface around the whole pipeline.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    MISSING,
    BandedMatrix,
    DataError,
    GenotypeMatrix,
    GroupDefinition,
    ParseError,
    PhenotypeVector,
    RaremetaError,
    SummaryBlock,
    VariantKey,
    VariantSummary,
    order_variants,
)
from .summarize import (  # noqa: F401
    CovariateMatrix,
    compute_summary,
    hwe_exact_pvalue,
    impute_missing,
    inverse_normal_transform,
    residualize,
    summarize_study,
)
from .meta import (  # noqa: F401
    AlignedStudy,
    HarmonizeResult,
    MetaScoreSet,
    MetaVariant,
    SingleVariantResult,
    flip_variant,
    genomic_control_lambda,
    harmonize,
    single_variant_meta,
)
from .genetests import (  # noqa: F401
    GeneTestResult,
    KernelSpec,
    ThresholdDesign,
    WeightVector,
    burden_test,
    fisher_combine,
    fisher_meta,
    min_p,
    minp_meta,
    run_gene_tests,
    selected_variants,
    skat_test,
    vt_test,
)
from .montecarlo import EmpiricalResult, McConfig, empirical_pvalue, sample_scores  # noqa: F401
from .conditional import (  # noqa: F401
    ConditionalBlock,
    condition,
    conditional_burden,
    conditional_skat,
)
from .numerics import MixtureTail, MvnEstimate, mixture_chisq_tail, mvn_rectangle  # noqa: F401
