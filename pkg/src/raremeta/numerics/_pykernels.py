"""Pure-Python numeric kernels.

Reference implementations of the three hot routines; the compiled extension
in ``_ckernels`` mirrors this logic exactly.  Keep the two in sync: the
cross-backend tests assert they agree to tight tolerances.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

_PI = math.pi
_LOG28 = 0.0866  # log(2) / 8, cutoff used by the convergence-factor bound


class _TermLimit(Exception):
    """Raised when the inversion exceeds its term budget."""


def _exp1(x: float) -> float:
    return 0.0 if x < -50.0 else math.exp(x)


def _log1(x: float, first: bool) -> float:
    """log(1 + x), or log(1 + x) - x, computed stably for small x."""
    if abs(x) > 0.1:
        return math.log(1.0 + x) if first else math.log(1.0 + x) - x
    y = x / (2.0 + x)
    term = 2.0 * y**3
    k = 3.0
    s = (2.0 if first else -x) * y
    y = y * y
    s1 = s + term / k
    while s1 != s:
        k += 2.0
        term *= y
        s = s1
        s1 = s + term / k
    return s1


class _MixtureInversion:
    """Tail probability of sum(lb[j] * chisq_1) by characteristic-function
    inversion with explicit truncation and discretization error control.

    Specialised to the central, one-degree-of-freedom case.
    """

    def __init__(self, lb: np.ndarray, c: float, acc: float, lim: int):
        self.lb = np.asarray(lb, dtype=np.float64)
        self.r = len(self.lb)
        self.c = c
        self.acc = acc
        self.lim = lim
        self.count = 0
        self.sigsq = 0.0
        self.intl = 0.0
        self.ersm = 0.0
        self.fail = False
        self.th: list[int] | None = None
        self.lmax = max(0.0, float(self.lb.max()))
        self.lmin = min(0.0, float(self.lb.min()))
        self.mean = float(self.lb.sum())
        self.sd = float((2.0 * self.lb**2).sum())

    def _counter(self):
        self.count += 1
        if self.count > self.lim:
            raise _TermLimit

    def _order(self):
        self.th = sorted(range(self.r), key=lambda j: -abs(self.lb[j]))

    def _errbd(self, u: float) -> tuple[float, float]:
        """Tail-probability bound from the mgf at u, plus the cutoff point."""
        self._counter()
        xconst = u * self.sigsq
        sum1 = u * xconst
        u2 = 2.0 * u
        for j in range(self.r - 1, -1, -1):
            lj = self.lb[j]
            x = u2 * lj
            y = 1.0 - x
            xconst += lj / y
            sum1 += x * x / y + _log1(-x, False)
        return _exp1(-0.5 * sum1), xconst

    def _ctff(self, accx: float, upn: float) -> tuple[float, float]:
        """Cutoff point c2 with P(Q > c2) < accx (upn > 0) or P(Q < c2) < accx."""
        u2 = upn
        u1 = 0.0
        c1 = self.mean
        rb = 2.0 * (self.lmax if u2 > 0.0 else self.lmin)
        u = u2 / (1.0 + u2 * rb)
        bd, c2 = self._errbd(u)
        while bd > accx:
            u1 = u2
            c1 = c2
            u2 = 2.0 * u2
            u = u2 / (1.0 + u2 * rb)
            bd, c2 = self._errbd(u)
        ratio = (c1 - self.mean) / (c2 - self.mean)
        while ratio < 0.9:
            u = (u1 + u2) / 2.0
            bd, xconst = self._errbd(u / (1.0 + u * rb))
            if bd > accx:
                u1 = u
                c1 = xconst
            else:
                u2 = u
                c2 = xconst
            ratio = (c1 - self.mean) / (c2 - self.mean)
        return c2, u2

    def _truncation(self, u: float, tausq: float) -> float:
        """Bound on the integration error from truncating at u."""
        self._counter()
        sum2 = (self.sigsq + tausq) * u * u
        prod1 = 2.0 * sum2
        prod2 = 0.0
        prod3 = 0.0
        s = 0
        u2 = 2.0 * u
        for j in range(self.r):
            x = (u2 * self.lb[j]) ** 2
            if x > 1.0:
                prod2 += math.log(x)
                prod3 += _log1(x, True)
                s += 1
            else:
                prod1 += _log1(x, True)
        prod2 = prod1 + prod2
        prod3 = prod1 + prod3
        x = _exp1(-0.25 * prod2) / _PI
        y = _exp1(-0.25 * prod3) / _PI
        err1 = 1.0 if s == 0 else x * 2.0 / s
        err2 = 2.5 * y if prod3 > 1.0 else 1.0
        if err2 < err1:
            err1 = err2
        x = 0.5 * sum2
        err2 = 1.0 if x <= y else y / x
        return err1 if err1 < err2 else err2

    def _findu(self, utx: float, accx: float) -> float:
        """Smallest sensible truncation point with truncation error < accx."""
        divis = (2.0, 1.4, 1.2, 1.1)
        ut = utx
        u = ut / 4.0
        if self._truncation(u, 0.0) > accx:
            u = ut
            while self._truncation(u, 0.0) > accx:
                ut *= 4.0
                u = ut
        else:
            ut = u
            u = u / 4.0
            while self._truncation(u, 0.0) <= accx:
                ut = u
                u = u / 4.0
        for d in divis:
            u = ut / d
            if self._truncation(u, 0.0) <= accx:
                ut = u
        return ut

    def _integrate(self, nterm: int, interv: float, tausq: float, mainx: bool):
        inpi = interv / _PI
        for k in range(nterm, -1, -1):
            u = (k + 0.5) * interv
            sum1 = -2.0 * u * self.c
            sum2 = abs(sum1)
            sum3 = -0.5 * self.sigsq * u * u
            for j in range(self.r - 1, -1, -1):
                x = 2.0 * self.lb[j] * u
                sum3 -= 0.25 * _log1(x * x, True)
                z = math.atan(x)
                sum1 += z
                sum2 += abs(z)
            x = inpi * _exp1(sum3) / u
            if not mainx:
                x *= 1.0 - _exp1(-0.5 * tausq * u * u)
            self.intl += math.sin(0.5 * sum1) * x
            self.ersm += 0.5 * sum2 * x

    def _cfe(self, x: float) -> float:
        """Coefficient of tausq in the error when a convergence factor is used."""
        self._counter()
        if self.th is None:
            self._order()
        axl = abs(x)
        sxl = 1.0 if x > 0.0 else -1.0
        sum1 = 0.0
        for j in range(self.r - 1, -1, -1):
            t = self.th[j]
            if self.lb[t] * sxl > 0.0:
                lj = abs(self.lb[t])
                axl1 = axl - lj
                axl2 = lj / _LOG28
                if axl1 > axl2:
                    axl = axl1
                else:
                    if axl > axl2:
                        axl = axl2
                    sum1 = (axl - axl1) / lj
                    sum1 += j  # one degree of freedom per remaining term
                    break
        if sum1 > 100.0:
            self.fail = True
            return 1.0
        return 2.0 ** (sum1 / 4.0) / (_PI * axl * axl)

    def run(self) -> tuple[float, int]:
        """Return (P(Q > c), fault code)."""
        acc1 = self.acc
        if self.sd == 0.0:
            return (1.0 if self.c <= 0.0 else 0.0), 0
        self.sd = math.sqrt(self.sd)
        almx = max(self.lmax, -self.lmin)
        try:
            utx = 16.0 / self.sd
            up = 4.5 / self.sd
            un = -up
            utx = self._findu(utx, 0.5 * acc1)
            if self.c != 0.0 and almx > 0.07 * self.sd:
                tausq = 0.25 * acc1 / self._cfe(self.c)
                if self.fail:
                    self.fail = False
                elif self._truncation(utx, tausq) < 0.2 * acc1:
                    self.sigsq += tausq
                    utx = self._findu(utx, 0.25 * acc1)
            acc1 = 0.5 * acc1
            xlim = float(self.lim)
            while True:
                cut, up = self._ctff(acc1, up)
                d1 = cut - self.c
                if d1 < 0.0:
                    return 0.0, 0  # point beyond the upper range bound
                cut, un = self._ctff(acc1, un)
                d2 = self.c - cut
                if d2 < 0.0:
                    return 1.0, 0
                intv = 2.0 * _PI / (d1 if d1 > d2 else d2)
                xnt = utx / intv
                xntm = 3.0 / math.sqrt(acc1)
                if xnt <= xntm * 1.5:
                    break
                # auxiliary integration with a convergence factor
                if xntm > xlim:
                    return float("nan"), 1
                ntm = int(math.floor(xntm + 0.5))
                intv1 = utx / ntm
                x = 2.0 * _PI / intv1
                if x <= abs(self.c):
                    break
                tausq = 0.33 * acc1 / (1.1 * (self._cfe(self.c - x) + self._cfe(self.c + x)))
                if self.fail:
                    break
                acc1 = 0.67 * acc1
                self._integrate(ntm, intv1, tausq, False)
                xlim -= xntm
                self.sigsq += tausq
                utx = self._findu(utx, 0.25 * acc1)
                acc1 = 0.75 * acc1
            if xnt > xlim:
                return float("nan"), 1
            nt = int(math.floor(xnt + 0.5))
            self._integrate(nt, intv, 0.0, True)
        except _TermLimit:
            return float("nan"), 4
        tail = 0.5 + self.intl
        ifault = 0
        # flag results where accumulated round-off could rival the answer
        x = self.ersm + self.acc / 10.0
        for rat in (1.0, 2.0, 4.0, 8.0):
            if rat * x == rat * self.ersm:
                ifault = 2
        return tail, ifault


def davies_tail(lb: np.ndarray, c: float, acc: float, lim: int) -> tuple[float, int]:
    """P(sum lb[j] * chisq_1 > c) with target accuracy ``acc``.

    Returns (tail, fault).  fault != 0 means the requested accuracy was not
    certified (1: term budget, 2: round-off, 4: internal budget); the caller
    is expected to fall back to a moment-matching approximation.
    """
    return _MixtureInversion(np.asarray(lb, dtype=np.float64), c, acc, lim).run()


def genz_lattice(
    ch: np.ndarray,
    az: np.ndarray,
    bz: np.ndarray,
    q: np.ndarray,
    shifts: np.ndarray,
    points: int,
) -> tuple[float, float]:
    """Randomized-lattice estimate of the MVN rectangle probability.

    ``ch``, ``az``, ``bz`` come from the permuted scaled Cholesky
    factorization; ``q`` holds the lattice generators and ``shifts`` one row
    of Cranley-Patterson shifts per randomization.  Returns (estimate,
    3 * standard error).
    """
    n = ch.shape[0]
    n_shifts = shifts.shape[0]
    kvec = np.arange(1, points + 1, dtype=np.float64)
    p = 0.0
    e = 0.0
    for s_idx in range(n_shifts):
        vp = np.ones(points)
        s_acc = np.zeros((n, points))
        c = d = None
        for i in range(n):
            if i > 0:
                x = np.abs(2.0 * np.mod(q[i] * kvec + shifts[s_idx, i], 1.0) - 1.0)
                z = np.clip(c + x * (d - c), 1e-300, 1.0 - 1e-16)
                y = ndtri(z)
                s_acc[i:] += ch[i:, i - 1 : i] * y
            si = s_acc[i]
            ai = az[i] - si
            bi = bz[i] - si
            if ch[i, i] > 0.0:
                c = np.ones(points)
                c[ai <= -9.0] = 0.0
                tl = np.abs(ai) < 9.0
                c[tl] = ndtr(ai[tl])
                d = np.ones(points)
                d[bi <= -9.0] = 0.0
                tl = np.abs(bi) < 9.0
                d[tl] = ndtr(bi[tl])
            else:
                # singular direction: the variable is determined by the
                # previous ones, so the factor is a step indicator
                c = (ai >= 0.0).astype(np.float64)
                d = (bi >= 0.0).astype(np.float64)
            vp = vp * (d - c)
        delta = (float(np.mean(vp)) - p) / (s_idx + 1)
        p += delta
        e = (s_idx - 1) * e / (s_idx + 1) + delta * delta
    return p, 3.0 * math.sqrt(e)


def hwe_exact(obs_hets: int, obs_hom1: int, obs_hom2: int) -> float:
    """Exact Hardy-Weinberg test p-value from genotype counts.

    Sums the probabilities of all heterozygote counts no more likely than
    the observed one, conditional on the allele counts.
    """
    n_total = obs_hets + obs_hom1 + obs_hom2
    if n_total == 0:
        return 1.0
    obs_homr = min(obs_hom1, obs_hom2)
    obs_homc = max(obs_hom1, obs_hom2)
    rare = 2 * obs_homr + obs_hets

    probs = [0.0] * (rare + 1)
    # start at the distribution's mode, adjusted to the feasible parity
    mid = rare * (2 * n_total - rare) // (2 * n_total)
    if (rare - mid) % 2 != 0:
        mid += 1
    probs[mid] = 1.0
    total = 1.0

    het = mid
    homr = (rare - mid) // 2
    homc = n_total - het - homr
    while het >= 2:
        probs[het - 2] = probs[het] * het * (het - 1.0) / (4.0 * (homr + 1.0) * (homc + 1.0))
        total += probs[het - 2]
        het -= 2
        homr += 1
        homc += 1

    het = mid
    homr = (rare - mid) // 2
    homc = n_total - het - homr
    while het <= rare - 2:
        probs[het + 2] = probs[het] * 4.0 * homr * homc / ((het + 2.0) * (het + 1.0))
        total += probs[het + 2]
        het += 2
        homr -= 1
        homc -= 1

    target = probs[obs_hets] * (1.0 + 1e-12)  # tolerance so exact ties stay included
    p = sum(v for v in probs if v <= target) / total
    return min(1.0, p)
