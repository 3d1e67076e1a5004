"""Compiled inner loops.

Everything here is sequential and fixed-order so results are bit-identical
across runs and independent of any threading configuration.  The separable
mode-sum kernels are the per-step hot path: they cost O(P * H^3) complex
multiply-adds, which is the method's intrinsic scaling.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def deposit_modes(E1, E2, E3, out):
    """Accumulate sum_p E1[p,a] * E2[p,b] * E3[p,c] into out[a,b,c].

    E* are per-axis phase factors exp(-i omega x_p); out is the (unweighted)
    nonuniform Fourier sum of the particle cloud.
    """
    P, H = E1.shape
    tmp = np.empty((H, H), np.complex128)
    for p in range(P):
        for b in range(H):
            e2 = E2[p, b]
            for c in range(H):
                tmp[b, c] = e2 * E3[p, c]
        for a in range(H):
            e1 = E1[p, a]
            for b in range(H):
                for c in range(H):
                    out[a, b, c] += e1 * tmp[b, c]


@njit(cache=True)
def mode_sum_real3(W1, W2, W3, E1, E2, E3, idx, out):
    """out[p, i] = Re( sum_m Wi[m] * conj(E1[p,m1] E2[p,m2] E3[p,m3]) ).

    conj(E) is exp(+i omega x_p), so this evaluates three truncated Fourier
    series at the particle positions listed in ``idx``.  Rows of ``out`` not
    in ``idx`` are left untouched.
    """
    H = E1.shape[1]
    n = idx.shape[0]
    for ii in range(n):
        p = idx[ii]
        acc1 = 0.0j
        acc2 = 0.0j
        acc3 = 0.0j
        for a in range(H):
            e1 = np.conj(E1[p, a])
            s1 = 0.0j
            s2 = 0.0j
            s3 = 0.0j
            for b in range(H):
                e2 = np.conj(E2[p, b])
                t1 = 0.0j
                t2 = 0.0j
                t3 = 0.0j
                for c in range(H):
                    e3 = np.conj(E3[p, c])
                    t1 += W1[a, b, c] * e3
                    t2 += W2[a, b, c] * e3
                    t3 += W3[a, b, c] * e3
                s1 += e2 * t1
                s2 += e2 * t2
                s3 += e2 * t3
            acc1 += e1 * s1
            acc2 += e1 * s2
            acc3 += e1 * s3
        out[p, 0] = acc1.real
        out[p, 1] = acc2.real
        out[p, 2] = acc3.real


@njit(cache=True)
def mode_sum_complex(W, E1, E2, E3, out):
    """out[p] = sum_m W[m] * conj(E1[p,m1] E2[p,m2] E3[p,m3]) (one series, all rows)."""
    P, H = E1.shape
    for p in range(P):
        acc = 0.0j
        for a in range(H):
            e1 = np.conj(E1[p, a])
            s = 0.0j
            for b in range(H):
                e2 = np.conj(E2[p, b])
                t = 0.0j
                for c in range(H):
                    t += W[a, b, c] * np.conj(E3[p, c])
                s += e2 * t
            acc += e1 * s
        out[p] = acc


@njit(cache=True)
def pair_drift_members(pos, members, beta, coef, dmin, out):
    """Random-batch interaction drift.

    out[p] = coef * sum_{s in members[p], s != p, |x_p - x_s| >= dmin}
             grad_K(x_p - x_s), with grad_K(x) = x (1 + beta r) e^{-beta r} / (4 pi r^3).
    """
    P, R = members.shape
    fourpi = 4.0 * np.pi
    for p in range(P):
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        x1 = pos[p, 0]
        x2 = pos[p, 1]
        x3 = pos[p, 2]
        for i in range(R):
            s = members[p, i]
            if s == p:
                continue
            d1 = x1 - pos[s, 0]
            d2 = x2 - pos[s, 1]
            d3 = x3 - pos[s, 2]
            r2 = d1 * d1 + d2 * d2 + d3 * d3
            r = np.sqrt(r2)
            if r < dmin:
                continue
            f = np.exp(-beta * r) * (1.0 + beta * r) / (fourpi * r2 * r)
            a1 += f * d1
            a2 += f * d2
            a3 += f * d3
        out[p, 0] = coef * a1
        out[p, 1] = coef * a2
        out[p, 2] = coef * a3


@njit(cache=True)
def pair_drift_full(pos, beta, coef, dmin, out):
    """Full interaction drift over all partners s != p (no batching)."""
    P = pos.shape[0]
    fourpi = 4.0 * np.pi
    for p in range(P):
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        x1 = pos[p, 0]
        x2 = pos[p, 1]
        x3 = pos[p, 2]
        for s in range(P):
            if s == p:
                continue
            d1 = x1 - pos[s, 0]
            d2 = x2 - pos[s, 1]
            d3 = x3 - pos[s, 2]
            r2 = d1 * d1 + d2 * d2 + d3 * d3
            r = np.sqrt(r2)
            if r < dmin:
                continue
            f = np.exp(-beta * r) * (1.0 + beta * r) / (fourpi * r2 * r)
            a1 += f * d1
            a2 += f * d2
            a3 += f * d3
        out[p, 0] = coef * a1
        out[p, 1] = coef * a2
        out[p, 2] = coef * a3


@njit(cache=True)
def sample_subsets(u, P):
    """Uniform size-R subsets of {0..P-1}, one per row of u, without replacement.

    Row p is a partial Fisher-Yates shuffle driven by the pre-drawn uniforms
    u[p, :]; the working pool is restored by undoing the swaps, so memory
    stays O(P) for any number of rows.
    """
    rows, R = u.shape
    pool = np.arange(P)
    out = np.empty((rows, R), np.int64)
    for p in range(rows):
        for i in range(R):
            j = i + int(u[p, i] * (P - i))
            if j >= P:
                j = P - 1
            pool[i], pool[j] = pool[j], pool[i]
            out[p, i] = pool[i]
        for i in range(R - 1, -1, -1):
            j = i + int(u[p, i] * (P - i))
            if j >= P:
                j = P - 1
            pool[i], pool[j] = pool[j], pool[i]
    return out
