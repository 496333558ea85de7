# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled allocation convolution kernels.

Contract and arithmetic match :mod:`fshuber._dp_py`; see its docstring for the
row normalization ``E(R) = C(R) R! / Q^R``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, floor, INFINITY

cnp.import_array()

cdef double _ODDS_CAP = 1e300


cdef inline double _logaddexp(double x, double y) noexcept nogil:
    cdef double mx
    if x == -INFINITY:
        return y
    if y == -INFINITY:
        return x
    mx = x if x > y else y
    return mx + log(exp(x - mx) + exp(y - mx))


cdef void _pmf_row(double* w, Py_ssize_t R, Py_ssize_t lo, Py_ssize_t hi,
                   double s, double log_s, double log_1ms, double odds,
                   const double* lf) noexcept nogil:
    # Binomial(R, s) masses on r = lo..hi, evaluated at the (clamped) mode and
    # extended outwards by the ratio recurrence; underflow leaves zeros
    cdef Py_ssize_t r0, r
    cdef double lw
    r0 = <Py_ssize_t>floor((R + 1) * s)
    if r0 > hi:
        r0 = hi
    if r0 < lo:
        r0 = lo
    lw = lf[R] - lf[r0] - lf[R - r0]
    if r0 > 0:
        lw += r0 * log_s
    if R - r0 > 0:
        lw += (R - r0) * log_1ms
    w[r0] = exp(lw)
    for r in range(r0, hi):
        w[r + 1] = w[r] * ((R - r) / (r + 1.0)) * odds
    for r in range(r0, lo, -1):
        w[r - 1] = w[r] * (r / (R - r + 1.0)) / odds


cdef double _run(const double* A, const Py_ssize_t* off, Py_ssize_t k,
                 const double* logp, const double* lf, bint renorm,
                 Py_ssize_t d, const double* dlogp, const double* pdot,
                 double* E, double* F, double* tmpE, double* tmpF,
                 double* w, double* logQ_out) noexcept nogil:
    cdef Py_ssize_t n = off[k] - k
    cdef Py_ssize_t S = 0, S_new, N, R, r, lo, hi, j, l, pas
    cdef double log_scale = 0.0, logQ = -INFINITY, logQ_new
    cdef double lp, s, log_s, log_1ms, odds, acc, accf, wa, mx, Q, e_prev
    cdef const double* a
    cdef bint first
    for R in range(n + 1):
        E[R] = 0.0
        for l in range(d):
            F[l * (n + 1) + R] = 0.0
    E[0] = 1.0
    for pas in range(2):
        for j in range(k):
            lp = logp[j]
            if (pas == 0) != (lp > -INFINITY):
                continue
            a = A + off[j]
            N = off[j + 1] - off[j] - 1
            if pas == 0:
                first = logQ == -INFINITY
                logQ_new = _logaddexp(logQ, lp)
                log_s = lp - logQ_new
                log_1ms = logQ - logQ_new
                s = exp(log_s)
                odds = _ODDS_CAP if first else exp(lp - logQ)
                if odds > _ODDS_CAP:
                    odds = _ODDS_CAP
                S_new = S + N
                for R in range(S_new + 1):
                    lo = R - S if R > S else 0
                    hi = N if N < R else R
                    if first:
                        # single category so far: all R clean draws sit in this atom
                        for r in range(lo, hi + 1):
                            w[r] = 0.0
                        w[R] = 1.0 if R <= N else 0.0
                    else:
                        _pmf_row(w, R, lo, hi, s, log_s, log_1ms, odds, lf)
                    acc = 0.0
                    for r in range(lo, hi + 1):
                        acc += w[r] * a[r] * E[R - r]
                    tmpE[R] = acc
                    for l in range(d):
                        accf = 0.0
                        for r in range(lo, hi + 1):
                            wa = w[r] * a[r]
                            accf += wa * (F[l * (n + 1) + R - r] + dlogp[l * k + j] * r * E[R - r])
                        tmpF[l * (n + 1) + R] = accf
                logQ = logQ_new
            else:
                # zero-probability atom: r = 0 in the coefficients, r = 1 in the derivative
                Q = exp(logQ) if logQ > -INFINITY else 1.0
                S_new = S
                if d > 0 and S + 1 <= n:
                    S_new = S + 1
                for R in range(S_new + 1):
                    tmpE[R] = E[R] * a[0] if R <= S else 0.0
                    for l in range(d):
                        accf = F[l * (n + 1) + R] * a[0] if R <= S else 0.0
                        if N >= 1 and R >= 1:
                            accf += pdot[l * k + j] / Q * R * E[R - 1] * a[1]
                        tmpF[l * (n + 1) + R] = accf
            S = S_new
            mx = 1.0
            if renorm:
                mx = 0.0
                for R in range(S + 1):
                    if tmpE[R] > mx:
                        mx = tmpE[R]
                log_scale += log(mx)
            for R in range(S + 1):
                E[R] = tmpE[R] / mx
                for l in range(d):
                    F[l * (n + 1) + R] = tmpF[l * (n + 1) + R] / mx
    logQ_out[0] = logQ if logQ > -INFINITY else 0.0
    return log_scale


def _sizes(const double[::1] A, const Py_ssize_t[::1] offsets):
    cdef Py_ssize_t k = offsets.shape[0] - 1
    cdef Py_ssize_t n = offsets[k] - k
    cdef Py_ssize_t nmax = 1
    cdef Py_ssize_t j
    for j in range(k):
        if offsets[j + 1] - offsets[j] > nmax:
            nmax = offsets[j + 1] - offsets[j]
    return k, n, nmax


def dp_forward(const double[::1] A, const Py_ssize_t[::1] offsets, const double[::1] logp,
               const double[::1] lf, bint renorm=True):
    """Return ``(E, log_scale, logQ)``."""
    cdef Py_ssize_t k, n, nmax
    k, n, nmax = _sizes(A, offsets)
    cdef double[::1] E = np.empty(n + 1)
    cdef double[::1] tmp = np.empty(n + 1)
    cdef double[::1] w = np.empty(nmax + 1)
    cdef double dummy = 0.0
    cdef double logQ = 0.0, ls
    with nogil:
        ls = _run(&A[0] if A.shape[0] else &dummy, &offsets[0], k, &logp[0] if k else &dummy,
                  &lf[0], renorm, 0, &dummy, &dummy, &E[0], &dummy, &tmp[0], &dummy, &w[0], &logQ)
    return np.asarray(E), ls, logQ


def dp_forward_grad(const double[::1] A, const Py_ssize_t[::1] offsets, const double[::1] logp,
                    const double[::1] lf, const double[:, ::1] dlogp, const double[:, ::1] pdot,
                    bint renorm=True):
    """Return ``(E, F, log_scale, logQ)``; ``F`` has shape ``(d, n + 1)``."""
    cdef Py_ssize_t k, n, nmax
    k, n, nmax = _sizes(A, offsets)
    cdef Py_ssize_t d = dlogp.shape[0]
    cdef double[::1] E = np.empty(n + 1)
    cdef double[::1] tmp = np.empty(n + 1)
    cdef double[:, ::1] F = np.empty((d, n + 1))
    cdef double[:, ::1] tmpF = np.empty((d, n + 1))
    cdef double[::1] w = np.empty(nmax + 1)
    cdef double dummy = 0.0
    cdef double logQ = 0.0, ls
    with nogil:
        ls = _run(&A[0] if A.shape[0] else &dummy, &offsets[0], k, &logp[0] if k else &dummy,
                  &lf[0], renorm, d,
                  &dlogp[0, 0] if k and d else &dummy, &pdot[0, 0] if k and d else &dummy,
                  &E[0], &F[0, 0] if d else &dummy, &tmp[0], &tmpF[0, 0] if d else &dummy, &w[0], &logQ)
    return np.asarray(E), np.asarray(F), ls, logQ


def dp_forward_batch(const double[::1] A, const Py_ssize_t[::1] offsets, const double[:, ::1] logp_rows,
                     const double[::1] lf):
    """Row-wise :func:`dp_forward`; returns ``(E, log_scales, logQs)``."""
    cdef Py_ssize_t k, n, nmax
    k, n, nmax = _sizes(A, offsets)
    cdef Py_ssize_t G = logp_rows.shape[0], g
    cdef double[:, ::1] out = np.empty((G, n + 1))
    cdef double[::1] scales = np.empty(G)
    cdef double[::1] logq = np.empty(G)
    cdef double[::1] tmp = np.empty(n + 1)
    cdef double[::1] w = np.empty(nmax + 1)
    cdef double dummy = 0.0
    with nogil:
        for g in range(G):
            scales[g] = _run(&A[0] if A.shape[0] else &dummy, &offsets[0], k,
                             &logp_rows[g, 0] if k else &dummy, &lf[0], True, 0, &dummy, &dummy,
                             &out[g, 0], &dummy, &tmp[0], &dummy, &w[0], &logq[g])
    return np.asarray(out), np.asarray(scales), np.asarray(logq)
