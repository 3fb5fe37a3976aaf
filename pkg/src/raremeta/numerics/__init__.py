"""Analytic tail-probability backends.

Two numeric workhorses live here:

* :func:`mvn_rectangle` — multivariate normal rectangle probabilities via a
  randomized lattice rule (Cranley-Patterson shifted Richtmyer generators)
  over a permuted, scaled Cholesky factorization that tolerates singular
  correlation matrices.
* :func:`mixture_chisq_tail` — tail of a weighted sum of 1-df chi-squares by
  characteristic-function inversion with certified accuracy, falling back to
  a moment-matching approximation when the inversion reports a fault.

The scalar inner loops come from a compiled extension when available; set
``RAREMETA_PURE_PYTHON=1`` to force the pure-Python twin (same algorithms,
same results, slower).
"""

from __future__ import annotations

import math
import os
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2, ncx2

from ..core import DataError

if os.environ.get("RAREMETA_PURE_PYTHON"):
    from . import _pykernels as _kernels

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _kernels  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - build without the extension
        from . import _pykernels as _kernels

        BACKEND = "python"

#: Largest dimension accepted by mvn_rectangle.
MAX_MVN_DIM = 1000

_MAX_SHIFTS = 10


def backend_name() -> str:
    """Which kernel implementation is active: "compiled" or "python"."""
    return BACKEND


class MvnEstimate(NamedTuple):
    """Rectangle probability estimate with its reported uncertainty."""

    value: float
    error: float  # three standard errors of the randomization


class MixtureTail(NamedTuple):
    """Mixture chi-square tail probability and how it was obtained."""

    p: float
    method: str  # "davies" or "liu"
    fault: int  # inversion fault code (0 when clean)


def first_primes(n: int) -> np.ndarray:
    """The first ``n`` primes, for the lattice generators."""
    if n <= 0:
        return np.array([], dtype=np.int64)
    # upper bound on the n-th prime (valid for n >= 6; padded for small n)
    bound = 15 if n < 6 else int(n * (math.log(n) + math.log(math.log(n)))) + 10
    sieve = np.ones(bound + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, int(bound**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = False
    primes = np.nonzero(sieve)[0]
    return primes[:n].astype(np.int64)


def _permuted_scaled_cholesky(
    R: np.ndarray, a: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower Cholesky factor of ``R`` with variable reordering and scaling.

    Variables are pivoted so that the narrowest conditional intervals come
    first, which stabilizes the sequential conditioning; singular directions
    get zeroed columns.  Limits are permuted and rescaled to match.
    """
    ep = 1e-10  # singularity tolerance
    eps = np.finfo(np.float64).eps
    n = len(R)
    c = np.array(R, dtype=np.float64, copy=True)
    ap = np.array(a, dtype=np.float64, copy=True)
    bp = np.array(b, dtype=np.float64, copy=True)
    d = np.sqrt(np.maximum(np.diag(c), 0))
    for i in range(n):
        if d[i] > 0:
            c[:, i] /= d[i]
            c[i, :] /= d[i]
            ap[i] /= d[i]
            bp[i] /= d[i]
    y = np.zeros(n)
    sqtp = math.sqrt(2 * math.pi)

    for k in range(n):
        im = k
        ckk = 0.0
        dem = 1.0
        s = 0.0
        am = bm = 0.0
        for i in range(k, n):
            if c[i, i] > eps:
                cii = math.sqrt(max(c[i, i], 0))
                s = c[i, :k] @ y[:k] if i > 0 else 0.0
                ai = (ap[i] - s) / cii
                bi = (bp[i] - s) / cii
                de = ndtr(bi) - ndtr(ai)
                if de <= dem:
                    ckk = cii
                    dem = de
                    am = ai
                    bm = bi
                    im = i
        if im > k:
            ap[[im, k]] = ap[[k, im]]
            bp[[im, k]] = bp[[k, im]]
            c[im, im] = c[k, k]
            t = c[im, :k].copy()
            c[im, :k] = c[k, :k]
            c[k, :k] = t
            t = c[im + 1 :, im].copy()
            c[im + 1 :, im] = c[im + 1 :, k]
            c[im + 1 :, k] = t
            t = c[k + 1 : im, k].copy()
            c[k + 1 : im, k] = c[im, k + 1 : im].T
            c[im, k + 1 : im] = t.T
        if ckk > ep * (k + 1):
            c[k, k] = ckk
            c[k, k + 1 :] = 0.0
            for i in range(k + 1, n):
                c[i, k] = c[i, k] / ckk
                c[i, k + 1 : i + 1] = c[i, k + 1 : i + 1] - c[i, k] * c[k + 1 : i + 1, k].T
            if abs(dem) > ep:
                y[k] = (math.exp(-(am**2) / 2) - math.exp(-(bm**2) / 2)) / (sqtp * dem)
            else:
                y[k] = (am + bm) / 2
                if am < -10:
                    y[k] = bm
                elif bm > 10:
                    y[k] = am
            c[k, : k + 1] /= ckk
            ap[k] /= ckk
            bp[k] /= ckk
        else:
            c[k:, k] = 0.0
            y[k] = (ap[k] + bp[k]) / 2
    return c, ap, bp


def _validated_correlation(corr: np.ndarray, m: int) -> np.ndarray:
    R = np.asarray(corr, dtype=np.float64)
    if R.shape != (m, m):
        raise DataError(f"correlation matrix shape {R.shape} does not match dimension {m}")
    if not np.isfinite(R).all():
        raise DataError("correlation matrix has non-finite entries")
    if np.abs(R - R.T).max(initial=0.0) > 1e-8:
        raise DataError("correlation matrix is not symmetric")
    if np.abs(np.diag(R) - 1.0).max(initial=0.0) > 1e-8:
        raise DataError("correlation matrix diagonal must be 1")
    R = (R + R.T) / 2.0
    wmin = float(np.linalg.eigvalsh(R).min()) if m > 1 else float(R[0, 0])
    if wmin < -1e-8:
        raise DataError(
            f"correlation matrix is not positive semidefinite (min eigenvalue {wmin:.3e})"
        )
    if wmin < 0.0:
        # tiny indefiniteness from rounding: nudge back onto the PSD cone
        R = R + (1e-8 + abs(wmin)) * np.eye(m)
    return R


def mvn_rectangle(
    lower,
    upper,
    corr,
    *,
    tol: float = 1e-4,
    seed: int | None = 0,
    max_points: int = 65536,
) -> MvnEstimate:
    """Estimate P(lower < Z < upper) for Z ~ MVN(0, corr).

    Parameters
    ----------
    lower, upper : array_like
        Rectangle bounds; entries may be -inf / +inf.  Must satisfy
        lower <= upper elementwise.
    corr : array_like
        Correlation matrix (unit diagonal, positive semidefinite up to a
        1e-8 tolerance; singular matrices are fine).
    tol : float
        Target for the reported error estimate.  The number of lattice
        points is escalated until the estimate's uncertainty falls below
        ``tol`` or ``max_points`` points per randomization are reached.
    seed : int or None
        Seed for the randomization shifts.  Identical inputs and seed give
        bit-identical results.
    max_points : int
        Cap on lattice points per randomization shift.

    Returns
    -------
    MvnEstimate
        ``value`` clipped to [0, 1] and ``error`` equal to three standard
        errors of the shift randomization (0 for exact 1-D results).
    """
    lo = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    hi = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    if lo.ndim != 1 or lo.shape != hi.shape:
        raise DataError("lower and upper must be 1-D arrays of equal length")
    m = lo.size
    if m == 0:
        raise DataError("rectangle must have at least one dimension")
    if m > MAX_MVN_DIM:
        raise DataError(f"dimension {m} exceeds the supported maximum {MAX_MVN_DIM}")
    if np.isnan(lo).any() or np.isnan(hi).any():
        raise DataError("rectangle bounds must not be NaN")
    if (lo > hi).any():
        raise DataError("lower bound exceeds upper bound")
    R = _validated_correlation(corr, m)

    if m == 1:
        return MvnEstimate(float(ndtr(hi[0]) - ndtr(lo[0])), 0.0)

    ch, az, bz = _permuted_scaled_cholesky(R, lo, hi)
    q = np.sqrt(first_primes(m).astype(np.float64))
    rng = np.random.default_rng(seed)
    points = 128
    while True:
        shifts = rng.random((_MAX_SHIFTS, m))
        value, err = _kernels.genz_lattice(ch, az, bz, q, shifts, points)
        if err <= tol or points >= max_points:
            break
        points = min(points * 4, max_points)
    return MvnEstimate(float(min(max(value, 0.0), 1.0)), float(err))


def liu_tail(lambdas, q: float) -> float:
    """Moment-matching tail approximation for a weighted chi-square sum.

    Matches skewness (or kurtosis when skewness is too small) to a
    noncentral chi-square.  Used as the fallback when inversion faults.
    """
    lb = np.asarray(lambdas, dtype=np.float64)
    c1 = lb.sum()
    c2 = (lb**2).sum()
    c3 = (lb**3).sum()
    c4 = (lb**4).sum()
    s1 = c3 / c2**1.5
    s2 = c4 / c2**2
    t = (q - c1) / math.sqrt(2.0 * c2)
    if s1 * s1 > s2:
        a = 1.0 / (s1 - math.sqrt(s1 * s1 - s2))
        delta = s1 * a**3 - a * a
        df = a * a - 2.0 * delta
    else:
        delta = 0.0
        df = 1.0 / s2
        a = math.sqrt(df)
    mu_x = df + delta
    sigma_x = math.sqrt(2.0) * a
    x = t * sigma_x + mu_x
    p = float(chi2.sf(x, df) if delta == 0.0 else ncx2.sf(x, df, delta))
    return min(max(p, 1e-300), 1.0)


def mixture_chisq_tail(
    lambdas,
    q: float,
    *,
    acc: float = 1e-9,
    lim: int = 1_000_000,
) -> MixtureTail:
    """P(sum_j lambdas[j] * chisq_1 > q) for nonnegative weights.

    Uses characteristic-function inversion with target accuracy ``acc``;
    when the inversion reports a fault or an out-of-range value it falls
    back to :func:`liu_tail` and flags that in the result.
    """
    lb = np.asarray(lambdas, dtype=np.float64)
    if lb.ndim != 1 or lb.size == 0:
        raise DataError("mixture weights must be a non-empty 1-D array")
    if not np.isfinite(lb).all() or (lb < 0).any():
        raise DataError("mixture weights must be finite and nonnegative")
    lb = lb[lb > 0]
    if lb.size == 0:
        raise DataError("mixture has no positive weight")
    if not math.isfinite(q):
        raise DataError("quadratic statistic must be finite")
    if q <= 0.0:
        return MixtureTail(1.0, "davies", 0)
    # common rescaling (invariant for the tail) keeps the inversion well-scaled
    scale = float(lb.max())
    tail, fault = _kernels.davies_tail(np.ascontiguousarray(lb / scale), q / scale, acc, lim)
    if fault != 0 or not (0.0 < tail <= 1.0 + acc) or math.isnan(tail):
        return MixtureTail(liu_tail(lb, q), "liu", int(fault))
    return MixtureTail(min(float(tail), 1.0), "davies", 0)
