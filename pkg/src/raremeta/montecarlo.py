"""Adaptive Monte-Carlo p-values under the null score distribution.

Under the null the pooled score vector is multivariate normal with mean zero
and the pooled covariance, so empirical p-values never need individual-level
data: draw score vectors, recompute the statistic, and count exceedances.
Sampling stops once enough exceedances have accumulated for a stable
estimate (or at the draw budget), and the estimate is the add-one rule
(exceedances + 1) / (draws + 1).

Draws are generated in fixed-size batches with one RNG stream per batch,
derived from (seed, batch index), so results are reproducible and
independent of how work is scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg.lapack import dpstrf

from .core import DataError

_PSD_RTOL = 1e-8


@dataclass(frozen=True)
class McConfig:
    """Stopping rule for adaptive sampling.

    Sampling stops at the end of the first batch where ``target_exceedances``
    have been seen, or when ``max_draws`` is exhausted.
    """

    target_exceedances: int = 100
    max_draws: int = 40_000_000
    batch_size: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.target_exceedances < 1:
            raise ValueError("target_exceedances must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.max_draws < self.batch_size:
            raise ValueError("max_draws must be at least one batch")


class EmpiricalResult(NamedTuple):
    p: float
    exceedances: int
    draws: int


def _pivoted_factor(cov: np.ndarray) -> np.ndarray:
    """Factor M (J x rank) with cov = M M^T, tolerating rank deficiency.

    Uses the pivoted Cholesky factorization, so exactly-singular covariances
    (monomorphic variants, perfect LD) are handled without jitter: dropped
    directions simply get zero rows.
    """
    a = np.array(cov, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError("covariance must be a square matrix")
    if a.shape[0] == 0:
        raise DataError("covariance is empty")
    if not np.isfinite(a).all():
        raise DataError("covariance entries must be finite")
    if np.abs(a - a.T).max() > 1e-8 * max(np.abs(a).max(), 1.0):
        raise DataError("covariance must be symmetric")
    c, piv, rank, info = dpstrf(a, lower=1)
    if info < 0:
        raise DataError(f"pivoted Cholesky failed (argument {-info})")
    lower = np.tril(c)[:, :rank]
    m = np.zeros((a.shape[0], rank))
    m[piv - 1, :] = lower
    resid = np.abs(a - m @ m.T).max()
    if resid > _PSD_RTOL * max(np.abs(a).max(), 1.0):
        raise DataError("covariance is not positive semidefinite")
    return m


def sample_scores(cov: np.ndarray, n_draws: int, seed=0) -> np.ndarray:
    """Draw ``n_draws`` null score vectors ~ MVN(0, cov), shape (n_draws, J)."""
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    factor = _pivoted_factor(np.asarray(cov))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_draws, factor.shape[1]))
    return z @ factor.T


def empirical_pvalue(
    observed: float,
    stat_fn: Callable[[np.ndarray], np.ndarray],
    cov: np.ndarray,
    config: McConfig | None = None,
) -> EmpiricalResult:
    """Adaptive Monte-Carlo p-value for ``stat_fn`` at the observed value.

    ``stat_fn`` maps a (n, J) array of score vectors to (n,) statistics and
    must treat larger as more extreme; ties with the observed value count as
    exceedances.
    """
    cfg = config or McConfig()
    if not np.isfinite(observed):
        raise DataError("observed statistic must be finite")
    factor = _pivoted_factor(np.asarray(cov))
    rank = factor.shape[1]

    draws = 0
    exceed = 0
    batch_idx = 0
    while draws < cfg.max_draws and exceed < cfg.target_exceedances:
        n = min(cfg.batch_size, cfg.max_draws - draws)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(batch_idx,)))
        z = rng.standard_normal((n, rank))
        stats = np.asarray(stat_fn(z @ factor.T))
        if stats.shape != (n,):
            raise DataError(
                f"stat_fn returned shape {stats.shape}, expected ({n},)"
            )
        exceed += int(np.count_nonzero(stats >= observed))
        draws += n
        batch_idx += 1
    return EmpiricalResult((exceed + 1) / (draws + 1), exceed, draws)
