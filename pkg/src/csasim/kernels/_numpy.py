"""Vectorised numpy versions of the compiled kernels.

Same signatures and, for ``ar_fill`` and ``count_many``, bit-identical
results: distances are accumulated per axis in the same order as the
compiled loops.  ``prefix_sums`` agrees to rounding only (matrix products
reorder the additions).
"""

import numpy as np

_CHUNK = 1 << 22


def _cells(Y, lower, h, res):
    idx = np.floor((Y - lower) / h).astype(np.int64)
    np.clip(idx, 0, res - 1, out=idx)
    cid = np.zeros(Y.shape[0], dtype=np.int64)
    for i in range(Y.shape[1]):
        cid = cid * res[i] + idx[:, i]
    return cid


def _sqdist(P, Q):
    """(len(Q), len(P)) squared distances, summed axis by axis."""
    t = P[None, :, 0] - Q[:, 0, None]
    d2 = t * t
    for i in range(1, P.shape[1]):
        t = P[None, :, i] - Q[:, i, None]
        d2 = d2 + t * t
    return d2


def _brute_counts(Q, P, r2):
    out = np.zeros(Q.shape[0], dtype=np.int64)
    if P.shape[0] == 0:
        return out
    step = max(1, _CHUNK // P.shape[0])
    for s in range(0, Q.shape[0], step):
        d2 = _sqdist(P, Q[s:s + step])
        out[s:s + step] = np.count_nonzero(d2 <= r2[s:s + step, None], axis=1)
    return out


def _insert(points, n, head, nxt, y, lower, cs, res):
    cid = int(_cells(y[None, :], lower, cs, res)[0])
    points[n] = y
    nxt[n] = head[cid]
    head[cid] = n


def count_many(queries, radii, points, limit, head, nxt, lower, cs, res, cap):
    if cap == 0:
        return np.zeros(queries.shape[0], dtype=np.int64)
    out = _brute_counts(queries, points[:limit], radii * radii)
    if cap > 0:
        np.minimum(out, cap, out=out)
    return out


def ar_fill(points, n, head, nxt, attempts, m_target, U, pos, pending,
            max_attempts, g_cs, g_res,
            lower, span, upper, r_h, r_res, r_vals, f_h, f_res,
            mode, T, tab, beta_lim, amp, phi_tab, beta_max, cap):
    d = points.shape[1]
    nrows = U.shape[0]
    while n < m_target and pos < nrows:
        # speculative batch: counts against the current points, patched on acceptance
        batch = int(min(512, max(16, _CHUNK // max(n, 1))))
        stop = min(nrows, pos + batch)
        rows = U[pos:stop]
        Y = np.minimum(lower + rows[:, :d] * span, upper)
        fc = _cells(Y, lower, f_h, f_res)
        if cap != 0:
            R = r_vals[_cells(Y, lower, r_h, r_res)]
            R2 = R * R
            cnt = _brute_counts(Y, points[:n], R2)
        for j in range(rows.shape[0]):
            pending += 1
            c = 0
            if cap != 0:
                c = int(cnt[j])
                if cap > 0 and c > cap:
                    c = cap
            if mode == 0:
                b = tab[min(c, T), fc[j]]
            else:
                b = beta_lim[fc[j]] * (1.0 + amp[fc[j]] * phi_tab[c])
            if rows[j, d] < b / beta_max:
                _insert(points, n, head, nxt, Y[j], lower, g_cs, g_res)
                attempts[n] = pending
                n += 1
                pending = 0
                if n >= m_target:
                    return n, pos + j + 1, pending, False
                if cap != 0 and j + 1 < rows.shape[0]:
                    d2 = _sqdist(Y[j:j + 1], Y[j + 1:])[:, 0]
                    cnt[j + 1:] += d2 <= R2[j + 1:]
            elif pending >= max_attempts:
                return n, pos + j + 1, pending, True
        pos = stop
    return n, pos, pending, False


def prefix_sums(points, queries, radii, qcell, weights,
                mode, T, tab, beta_lim, amp, phi_tab):
    m = points.shape[0]
    out = np.zeros((m + 1, weights.shape[1]))
    r2 = radii * radii
    step = max(1, _CHUNK // (m + 1))
    for s in range(0, queries.shape[0], step):
        Q = queries[s:s + step]
        counts = np.zeros((m + 1, Q.shape[0]), dtype=np.int64)
        if m:
            incl = _sqdist(Q, points) <= r2[None, s:s + step]
            np.cumsum(incl, axis=0, out=counts[1:])
        fc = qcell[s:s + step]
        if mode == 0:
            b = tab[np.minimum(counts, T), fc[None, :]]
        else:
            b = beta_lim[fc][None, :] * (1.0 + amp[fc][None, :] * phi_tab[counts])
        out += b @ weights[s:s + step]
    return out
