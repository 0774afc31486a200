"""Compiled kernels. Signatures mirror ``_numpy`` one-for-one."""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True)


@njit(inline="always")
def _cell(y, lower, h, res):
    cid = 0
    for i in range(y.shape[0]):
        j = math.floor((y[i] - lower[i]) / h[i])
        if j < 0:
            j = 0
        elif j >= res[i]:
            j = res[i] - 1
        cid = cid * res[i] + j
    return cid


@njit(inline="always")
def _grid_cell(y, lower, cs, res):
    cid = 0
    for i in range(y.shape[0]):
        j = math.floor((y[i] - lower[i]) / cs)
        if j < 0:
            j = 0
        elif j >= res[i]:
            j = res[i] - 1
        cid = cid * res[i] + j
    return cid


@njit(inline="always")
def _axis_range(x, r, lo, cs, n):
    a = math.floor((x - r - lo) / cs)
    b = math.floor((x + r - lo) / cs)
    if a < 0:
        a = 0
    if b >= n:
        b = n - 1
    return a, b


@njit(**_JIT)
def _count_ball(x, r, points, limit, head, nxt, lower, cs, res, cap):
    if cap == 0:
        return 0
    d = x.shape[0]
    # padded radius keeps boundary points whose cell index rounds outward
    rp = r * (1.0 + 1e-9)
    a0, b0 = _axis_range(x[0], rp, lower[0], cs, res[0])
    a1, b1, n1 = 0, 0, 1
    a2, b2, n2 = 0, 0, 1
    if d > 1:
        a1, b1 = _axis_range(x[1], rp, lower[1], cs, res[1])
        n1 = res[1]
    if d > 2:
        a2, b2 = _axis_range(x[2], rp, lower[2], cs, res[2])
        n2 = res[2]
    r2 = r * r
    cnt = 0
    for i0 in range(a0, b0 + 1):
        for i1 in range(a1, b1 + 1):
            base = (i0 * n1 + i1) * n2
            for i2 in range(a2, b2 + 1):
                p = head[base + i2]
                while p >= 0:
                    if p < limit:
                        d2 = 0.0
                        for i in range(d):
                            t = points[p, i] - x[i]
                            d2 += t * t
                        if d2 <= r2:
                            cnt += 1
                            if cap > 0 and cnt >= cap:
                                return cnt
                    p = nxt[p]
    return cnt


@njit(**_JIT)
def count_many(queries, radii, points, limit, head, nxt, lower, cs, res, cap):
    out = np.empty(queries.shape[0], dtype=np.int64)
    for q in range(queries.shape[0]):
        out[q] = _count_ball(queries[q], radii[q], points, limit, head, nxt,
                             lower, cs, res, cap)
    return out


@njit(**_JIT)
def ar_fill(points, n, head, nxt, attempts, m_target, U, pos, pending,
            max_attempts, g_cs, g_res,
            lower, span, upper, r_h, r_res, r_vals, f_h, f_res,
            mode, T, tab, beta_lim, amp, phi_tab, beta_max, cap):
    d = points.shape[1]
    y = np.empty(d)
    nrows = U.shape[0]
    while n < m_target and pos < nrows:
        for i in range(d):
            v = lower[i] + U[pos, i] * span[i]
            y[i] = v if v < upper[i] else upper[i]
        u = U[pos, d]
        pos += 1
        pending += 1
        fc = _cell(y, lower, f_h, f_res)
        if cap == 0:
            cnt = 0
        else:
            r = r_vals[_cell(y, lower, r_h, r_res)]
            cnt = _count_ball(y, r, points, n, head, nxt, lower, g_cs, g_res, cap)
        if mode == 0:
            b = tab[min(cnt, T), fc]
        else:
            b = beta_lim[fc] * (1.0 + amp[fc] * phi_tab[cnt])
        if u < b / beta_max:
            cid = _grid_cell(y, lower, g_cs, g_res)
            for i in range(d):
                points[n, i] = y[i]
            nxt[n] = head[cid]
            head[cid] = n
            attempts[n] = pending
            n += 1
            pending = 0
        elif pending >= max_attempts:
            return n, pos, pending, True
    return n, pos, pending, False


@njit(**_JIT)
def prefix_sums(points, queries, radii, qcell, weights,
                mode, T, tab, beta_lim, amp, phi_tab):
    m = points.shape[0]
    nq = queries.shape[0]
    d = queries.shape[1]
    nk = weights.shape[1]
    counts = np.zeros(nq, dtype=np.int64)
    out = np.zeros((m + 1, nk))
    r2 = radii * radii
    for k in range(m + 1):
        for q in range(nq):
            c = counts[q]
            fc = qcell[q]
            if mode == 0:
                b = tab[min(c, T), fc]
            else:
                b = beta_lim[fc] * (1.0 + amp[fc] * phi_tab[c])
            for j in range(nk):
                out[k, j] += b * weights[q, j]
        if k < m:
            for q in range(nq):
                d2 = 0.0
                for i in range(d):
                    t = points[k, i] - queries[q, i]
                    d2 += t * t
                if d2 <= r2[q]:
                    counts[q] += 1
    return out
