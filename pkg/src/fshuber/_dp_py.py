"""Numpy implementation of the allocation convolution kernels.

Same contract and arithmetic as the compiled ``_dp`` extension; selected when
the extension is missing or ``FSHUBER_PURE_PYTHON`` is set.

Inputs shared by both backends
------------------------------
A : float array
    Concatenated theta-free cell factors ``(alpha_j)_{N_j-r} / (N_j-r)!`` for
    ``r = 0..N_j`` of every atom with a positive count (each atom's block
    already divided by its maximum).
offsets : intp array, length k + 1
    Block boundaries in ``A``.
logp : float array, length k
    ``log p_j(theta)`` of those atoms; ``-inf`` marks a zero-probability atom.
lf : float array
    ``ln R!`` for ``R = 0..n``.

Rows are kept as ``E(R) = C(R) R! / Q^R`` where ``Q`` is the running total of
positive atom probabilities (1 while that total is zero) and ``C`` is the
coefficient of ``u^R`` in the product of cell polynomials. Adding atom ``j``
is then a binomial(R, p_j / Q_j) weighted average, which stays in floating
point range where the raw coefficients do not. Derivative rows ``F_l`` use
the identical normalization. Every row is divided by ``max(E)`` after each
atom and the logs of those factors are summed into ``log_scale``.
"""

from __future__ import annotations

import math

import numpy as np


def _order(logp):
    # positive-probability atoms first so Q is positive before any zero atom arrives
    finite = [j for j in range(len(logp)) if logp[j] > -np.inf]
    zero = [j for j in range(len(logp)) if not logp[j] > -np.inf]
    return finite, zero


def _pmf_matrix(S_prev, N, log_s, log_1ms, lf):
    """``w[R, r]`` = Binomial(R, s) mass at ``r`` on the attainable band, else 0."""
    S_new = S_prev + N
    R = np.arange(S_new + 1)[:, None]
    r = np.arange(N + 1)[None, :]
    valid = (r <= R) & (R - r <= S_prev)
    Rr = np.where(valid, R - r, 0)
    rr = np.where(valid, r, 0)
    with np.errstate(invalid="ignore"):
        t_s = np.where(rr > 0, rr * log_s, 0.0)
        t_1 = np.where(Rr > 0, Rr * log_1ms, 0.0)
    logw = lf[R] - lf[rr] - lf[Rr] + t_s + t_1
    w = np.where(valid, np.exp(np.where(valid, logw, -np.inf)), 0.0)
    return w, np.where(valid, Rr, 0), valid


def _run(A, offsets, logp, lf, renorm, dlogp=None, pdot=None):
    k = len(offsets) - 1
    n = int(offsets[-1]) - k
    d = 0 if dlogp is None else dlogp.shape[0]
    E = np.zeros(n + 1)
    E[0] = 1.0
    F = np.zeros((d, n + 1))
    log_scale = 0.0
    logQ = -np.inf
    S = 0
    finite, zero = _order(logp)
    for j in finite + zero:
        a = A[offsets[j]:offsets[j + 1]]
        N = a.size - 1
        lp = float(logp[j])
        if lp > -np.inf:
            logQ_new = np.logaddexp(logQ, lp)
            log_s = lp - logQ_new
            log_1ms = logQ - logQ_new
            w, idx, valid = _pmf_matrix(S, N, log_s, log_1ms, lf)
            wa = w * a[None, :]
            Eprev = np.where(valid, E[idx], 0.0)
            newE = (wa * Eprev).sum(axis=1)
            if d:
                r = np.arange(N + 1)[None, :]
                newF = np.empty((d, S + N + 1))
                for l in range(d):
                    Fprev = np.where(valid, F[l][idx], 0.0)
                    newF[l] = (wa * (Fprev + dlogp[l, j] * r * Eprev)).sum(axis=1)
            logQ = logQ_new
            S += N
        else:
            # zero-probability atom: only r = 0 survives in C, r = 1 in its derivative
            Q = math.exp(logQ) if logQ > -np.inf else 1.0
            S_new = min(S + 1, n) if d else S
            newE = np.zeros(S_new + 1)
            newE[:S + 1] = E[:S + 1] * a[0]
            if d:
                newF = np.zeros((d, S_new + 1))
                R = np.arange(1, S_new + 1)
                for l in range(d):
                    newF[l, :S + 1] = F[l, :S + 1] * a[0]
                    if N >= 1:
                        newF[l, 1:] += pdot[l, j] / Q * R * E[R - 1] * a[1]
            S = S_new
        if renorm:
            mx = newE.max()
            newE = newE / mx
            if d:
                newF = newF / mx
            log_scale += math.log(mx)
        E[:newE.size] = newE
        if d:
            F[:, :newF.shape[1]] = newF
    return E, F, log_scale, (logQ if logQ > -np.inf else 0.0)


def dp_forward(A, offsets, logp, lf, renorm=True):
    """Return ``(E, log_scale, logQ)``."""
    E, _, ls, lq = _run(A, offsets, logp, lf, renorm)
    return E, ls, lq


def dp_forward_grad(A, offsets, logp, lf, dlogp, pdot, renorm=True):
    """Return ``(E, F, log_scale, logQ)``; ``F`` has shape ``(d, n + 1)``.

    ``dlogp[l, j]`` is ``d log p_j / d theta_l`` (used for positive atoms) and
    ``pdot[l, j]`` is ``d p_j / d theta_l`` (used for zero-probability atoms).
    """
    return _run(A, offsets, logp, lf, renorm, dlogp, pdot)


def dp_forward_batch(A, offsets, logp_rows, lf):
    """Row-wise :func:`dp_forward`; returns ``(E, log_scales, logQs)``."""
    k = len(offsets) - 1
    n = int(offsets[-1]) - k
    G = logp_rows.shape[0]
    out = np.empty((G, n + 1))
    scales = np.empty(G)
    logq = np.empty(G)
    for g in range(G):
        out[g], scales[g], logq[g] = dp_forward(A, offsets, logp_rows[g], lf)
    return out, scales, logq
