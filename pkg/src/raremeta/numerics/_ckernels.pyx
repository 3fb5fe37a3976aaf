# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels.

Mirrors ``_pykernels`` exactly; see that module for the reference logic and
documentation.  These routines sit in the innermost loops of the analytic
p-value machinery, which is why they are compiled.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan, exp, fabs, floor, log, sin, sqrt, NAN
from scipy.special.cython_special cimport ndtr, ndtri

cnp.import_array()

cdef double _PI = 3.141592653589793
cdef double _LOG28 = 0.0866


class _TermLimit(Exception):
    pass


cdef inline double _exp1(double x):
    return 0.0 if x < -50.0 else exp(x)


cdef double _log1(double x, bint first):
    cdef double y, term, k, s, s1
    if fabs(x) > 0.1:
        return log(1.0 + x) if first else log(1.0 + x) - x
    y = x / (2.0 + x)
    term = 2.0 * y * y * y
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


cdef class _MixtureInversion:
    cdef double[::1] lb
    cdef long[::1] th
    cdef int r, lim, count
    cdef double c, acc, sigsq, intl, ersm, lmax, lmin, mean, sd
    cdef bint fail, sorted_ready

    def __init__(self, double[::1] lb, double c, double acc, int lim):
        cdef int j
        cdef double lj
        self.lb = lb
        self.r = lb.shape[0]
        self.c = c
        self.acc = acc
        self.lim = lim
        self.count = 0
        self.sigsq = 0.0
        self.intl = 0.0
        self.ersm = 0.0
        self.fail = False
        self.sorted_ready = False
        self.th = np.zeros(self.r, dtype=np.int64)
        self.lmax = 0.0
        self.lmin = 0.0
        self.mean = 0.0
        self.sd = 0.0
        for j in range(self.r):
            lj = lb[j]
            if lj > self.lmax:
                self.lmax = lj
            if lj < self.lmin:
                self.lmin = lj
            self.mean += lj
            self.sd += 2.0 * lj * lj

    cdef inline void _counter(self) except *:
        self.count += 1
        if self.count > self.lim:
            raise _TermLimit()

    cdef void _order(self):
        order = np.argsort(-np.abs(np.asarray(self.lb)), kind="stable")
        cdef int j
        for j in range(self.r):
            self.th[j] = order[j]
        self.sorted_ready = True

    cdef double _errbd(self, double u, double* cx) except *:
        cdef double xconst, sum1, u2, lj, x, y
        cdef int j
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
        cx[0] = xconst
        return _exp1(-0.5 * sum1)

    cdef double _ctff(self, double accx, double* upn) except *:
        cdef double u1, u2, u, rb, c1, c2, xconst, bd, ratio
        u2 = upn[0]
        u1 = 0.0
        c1 = self.mean
        rb = 2.0 * (self.lmax if u2 > 0.0 else self.lmin)
        u = u2 / (1.0 + u2 * rb)
        bd = self._errbd(u, &c2)
        while bd > accx:
            u1 = u2
            c1 = c2
            u2 = 2.0 * u2
            u = u2 / (1.0 + u2 * rb)
            bd = self._errbd(u, &c2)
        ratio = (c1 - self.mean) / (c2 - self.mean)
        while ratio < 0.9:
            u = (u1 + u2) / 2.0
            bd = self._errbd(u / (1.0 + u * rb), &xconst)
            if bd > accx:
                u1 = u
                c1 = xconst
            else:
                u2 = u
                c2 = xconst
            ratio = (c1 - self.mean) / (c2 - self.mean)
        upn[0] = u2
        return c2

    cdef double _truncation(self, double u, double tausq) except *:
        cdef double sum2, prod1, prod2, prod3, x, y, err1, err2, u2
        cdef int j, s
        self._counter()
        sum2 = (self.sigsq + tausq) * u * u
        prod1 = 2.0 * sum2
        prod2 = 0.0
        prod3 = 0.0
        s = 0
        u2 = 2.0 * u
        for j in range(self.r):
            x = u2 * self.lb[j]
            x = x * x
            if x > 1.0:
                prod2 += log(x)
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

    cdef double _findu(self, double utx, double accx) except *:
        cdef double ut, u
        cdef double[4] divis
        cdef int i
        divis[0] = 2.0
        divis[1] = 1.4
        divis[2] = 1.2
        divis[3] = 1.1
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
        for i in range(4):
            u = ut / divis[i]
            if self._truncation(u, 0.0) <= accx:
                ut = u
        return ut

    cdef void _integrate(self, int nterm, double interv, double tausq, bint mainx):
        cdef double inpi, u, sum1, sum2, sum3, x, z
        cdef int k, j
        inpi = interv / _PI
        for k in range(nterm, -1, -1):
            u = (k + 0.5) * interv
            sum1 = -2.0 * u * self.c
            sum2 = fabs(sum1)
            sum3 = -0.5 * self.sigsq * u * u
            for j in range(self.r - 1, -1, -1):
                x = 2.0 * self.lb[j] * u
                sum3 -= 0.25 * _log1(x * x, True)
                z = atan(x)
                sum1 += z
                sum2 += fabs(z)
            x = inpi * _exp1(sum3) / u
            if not mainx:
                x *= 1.0 - _exp1(-0.5 * tausq * u * u)
            self.intl += sin(0.5 * sum1) * x
            self.ersm += 0.5 * sum2 * x

    cdef double _cfe(self, double x) except *:
        cdef double axl, sxl, sum1, lj, axl1, axl2
        cdef int j, t
        self._counter()
        if not self.sorted_ready:
            self._order()
        axl = fabs(x)
        sxl = 1.0 if x > 0.0 else -1.0
        sum1 = 0.0
        for j in range(self.r - 1, -1, -1):
            t = self.th[j]
            if self.lb[t] * sxl > 0.0:
                lj = fabs(self.lb[t])
                axl1 = axl - lj
                axl2 = lj / _LOG28
                if axl1 > axl2:
                    axl = axl1
                else:
                    if axl > axl2:
                        axl = axl2
                    sum1 = (axl - axl1) / lj
                    sum1 += j
                    break
        if sum1 > 100.0:
            self.fail = True
            return 1.0
        return 2.0 ** (sum1 / 4.0) / (_PI * axl * axl)

    def run(self):
        cdef double acc1, almx, utx, up, un, tausq, cut, d1, d2
        cdef double intv, intv1, xnt, xntm, xlim, x, tail
        cdef int nt, ntm, ifault
        cdef double[4] rats
        cdef int j
        acc1 = self.acc
        if self.sd == 0.0:
            return (1.0 if self.c <= 0.0 else 0.0), 0
        self.sd = sqrt(self.sd)
        almx = self.lmax if self.lmax > -self.lmin else -self.lmin
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
            xlim = <double> self.lim
            while True:
                cut = self._ctff(acc1, &up)
                d1 = cut - self.c
                if d1 < 0.0:
                    return 0.0, 0
                cut = self._ctff(acc1, &un)
                d2 = self.c - cut
                if d2 < 0.0:
                    return 1.0, 0
                intv = 2.0 * _PI / (d1 if d1 > d2 else d2)
                xnt = utx / intv
                xntm = 3.0 / sqrt(acc1)
                if xnt <= xntm * 1.5:
                    break
                if xntm > xlim:
                    return NAN, 1
                ntm = <int> floor(xntm + 0.5)
                intv1 = utx / ntm
                x = 2.0 * _PI / intv1
                if x <= fabs(self.c):
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
                return NAN, 1
            nt = <int> floor(xnt + 0.5)
            self._integrate(nt, intv, 0.0, True)
        except _TermLimit:
            return NAN, 4
        tail = 0.5 + self.intl
        ifault = 0
        rats[0] = 1.0
        rats[1] = 2.0
        rats[2] = 4.0
        rats[3] = 8.0
        x = self.ersm + self.acc / 10.0
        for j in range(4):
            if rats[j] * x == rats[j] * self.ersm:
                ifault = 2
        return tail, ifault


def davies_tail(lb, double c, double acc, int lim):
    """P(sum lb[j] * chisq_1 > c); returns (tail, fault)."""
    cdef double[::1] lbv = np.ascontiguousarray(lb, dtype=np.float64)
    return _MixtureInversion(lbv, c, acc, lim).run()


def genz_lattice(ch, az, bz, q, shifts, long points):
    """Randomized-lattice MVN rectangle estimate; returns (estimate, 3 * SE)."""
    cdef double[:, ::1] chv = np.ascontiguousarray(ch, dtype=np.float64)
    cdef double[::1] azv = np.ascontiguousarray(az, dtype=np.float64)
    cdef double[::1] bzv = np.ascontiguousarray(bz, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] shiftv = np.ascontiguousarray(shifts, dtype=np.float64)
    cdef int n = chv.shape[0]
    cdef int n_shifts = shiftv.shape[0]
    cdef double[::1] y = np.zeros(n)
    cdef double p = 0.0, e = 0.0
    cdef double sum_vp, vp, cprev, dprev, xk, z, si, ai, bi, cc, dd, delta
    cdef long k
    cdef int s_idx, i, j
    for s_idx in range(n_shifts):
        sum_vp = 0.0
        for k in range(1, points + 1):
            vp = 1.0
            cprev = 0.0
            dprev = 1.0
            for i in range(n):
                if i > 0:
                    xk = qv[i] * k + shiftv[s_idx, i]
                    xk = fabs(2.0 * (xk - floor(xk)) - 1.0)
                    z = cprev + xk * (dprev - cprev)
                    if z < 1e-300:
                        z = 1e-300
                    elif z > 1.0 - 1e-16:
                        z = 1.0 - 1e-16
                    y[i - 1] = ndtri(z)
                si = 0.0
                for j in range(i):
                    si += chv[i, j] * y[j]
                ai = azv[i] - si
                bi = bzv[i] - si
                if chv[i, i] > 0.0:
                    if ai <= -9.0:
                        cc = 0.0
                    elif ai < 9.0:
                        cc = ndtr(ai)
                    else:
                        cc = 1.0
                    if bi <= -9.0:
                        dd = 0.0
                    elif bi < 9.0:
                        dd = ndtr(bi)
                    else:
                        dd = 1.0
                else:
                    # singular direction: the variable is determined by the
                    # previous ones, so the factor is a step indicator
                    cc = 1.0 if ai >= 0.0 else 0.0
                    dd = 1.0 if bi >= 0.0 else 0.0
                vp *= dd - cc
                cprev = cc
                dprev = dd
            sum_vp += vp
        delta = (sum_vp / points - p) / (s_idx + 1)
        p += delta
        e = (s_idx - 1) * e / (s_idx + 1) + delta * delta
    return p, 3.0 * sqrt(e)


def hwe_exact(long obs_hets, long obs_hom1, long obs_hom2):
    """Exact Hardy-Weinberg test p-value from genotype counts."""
    cdef long n_total = obs_hets + obs_hom1 + obs_hom2
    if n_total == 0:
        return 1.0
    cdef long obs_homr = obs_hom1 if obs_hom1 < obs_hom2 else obs_hom2
    cdef long rare = 2 * obs_homr + obs_hets
    cdef double[::1] probs = np.zeros(rare + 1)
    cdef long mid = rare * (2 * n_total - rare) // (2 * n_total)
    if (rare - mid) % 2 != 0:
        mid += 1
    probs[mid] = 1.0
    cdef double total = 1.0
    cdef long het = mid
    cdef long homr = (rare - mid) // 2
    cdef long homc = n_total - het - homr
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
    cdef double target = probs[obs_hets] * (1.0 + 1e-12)
    cdef double psum = 0.0
    cdef long idx
    for idx in range(rare + 1):
        if probs[idx] <= target:
            psum += probs[idx]
    psum /= total
    return psum if psum < 1.0 else 1.0
