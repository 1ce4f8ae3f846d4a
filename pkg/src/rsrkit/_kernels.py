"""Batched spectrum sweep kernel for the fine-grained stage.

The sweep evaluates the eigenvalues of millions of batch covariances.
Four observations make this cheap:

  * the eigen-problem is tiny (r-hat by r-hat), so everything runs
    in-place with no per-batch allocations;
  * a batch gram is a sum of per-sample outer products, which can be
    precomputed once as packed upper triangles and accumulated with
    contiguous adds;
  * after warmup almost no batch improves any running per-index
    minimum, so a Sturm sign-change count on the tridiagonalized gram
    (all thresholds evaluated lane-parallel, conservatively inflated)
    certifies "cannot improve anything" and skips the full QL solve;
  * batch membership needs only B raw 64-bit draws via a partial
    Fisher-Yates pass over a reusable index pool.

Eigenvalues come from Householder tridiagonalization followed by
implicit-shift QL (the EISPACK tred1/tql1 pair), ascending, with
negatives clamped to exact zero so rank-deficient batches tie at 0.0
and the smallest-batch-index rule resolves the argmin deterministically.

The chunk layout is part of the reproducibility contract: batch j
consumes row j - j0 of the uint64 block for its chunk, and chunks are
CHUNK batches wide.
"""

from __future__ import annotations

import numba as nb
import numpy as np

CHUNK = 4096
_TINY = 1e-300


def outer_table(XT: np.ndarray) -> np.ndarray:
    """Packed upper-triangle outer products x_c x_c', one row per sample."""
    n, m = XT.shape
    iu, ju = np.triu_indices(m)
    return np.ascontiguousarray(XT[:, iu] * XT[:, ju])


@nb.njit(cache=True, nogil=True, inline="always")
def _tridiag(G, d, e, m):
    # Householder reduction of symmetric G (destroyed) to tridiagonal
    # (diagonal d, off-diagonal e with e[0] unused); values-only.
    for i in range(m - 1, 0, -1):
        l = i - 1
        h = 0.0
        if l > 0:
            scale = 0.0
            for k in range(i):
                scale += abs(G[i, k])
            if scale == 0.0:
                e[i] = G[i, l]
            else:
                for k in range(i):
                    G[i, k] /= scale
                    h += G[i, k] * G[i, k]
                f = G[i, l]
                g = -np.sqrt(h) if f >= 0.0 else np.sqrt(h)
                e[i] = scale * g
                h -= f * g
                G[i, l] = f - g
                f = 0.0
                for j in range(i):
                    g2 = 0.0
                    for k in range(j + 1):
                        g2 += G[j, k] * G[i, k]
                    for k in range(j + 1, i):
                        g2 += G[k, j] * G[i, k]
                    e[j] = g2 / h
                    f += e[j] * G[i, j]
                hh = f / (h + h)
                for j in range(i):
                    f = G[i, j]
                    g2 = e[j] - hh * f
                    e[j] = g2
                    for k in range(j + 1):
                        G[j, k] -= f * e[k] + g2 * G[i, k]
        else:
            e[i] = G[i, l]
        d[i] = G[i, i]
    d[0] = G[0, 0]
    e[0] = 0.0


@nb.njit(cache=True, nogil=True, inline="always")
def _sturm_all(d, e, m, th, cnt, p, pm):
    # For every lane q: the number of eigenvalues of the tridiagonal
    # (d, e) strictly below th[q], counted as sign changes of the
    # characteristic sequence.  Multiplication-only with rescaling.
    for q in range(m):
        pm[q] = 1.0
        p[q] = d[0] - th[q]
        cnt[q] = 1 if p[q] < 0.0 else 0
    for i in range(1, m):
        di = d[i]
        ei2 = e[i] * e[i]
        for q in range(m):
            pn = (di - th[q]) * p[q] - ei2 * pm[q]
            pm[q] = p[q]
            p[q] = pn
        for q in range(m):
            if p[q] == 0.0:
                p[q] = -_TINY if pm[q] > 0.0 else _TINY
                cnt[q] += 1
            elif (p[q] < 0.0) != (pm[q] < 0.0):
                cnt[q] += 1
            ap = abs(p[q])
            if ap > 1e120:
                p[q] *= 1e-120
                pm[q] *= 1e-120
            elif ap < 1e-120:
                p[q] *= 1e120
                pm[q] *= 1e120


@nb.njit(cache=True, nogil=True, inline="always")
def _tql_values(d, e, m):
    # implicit-shift QL on tridiagonal (d, e); eigenvalues into d, ascending
    for i in range(1, m):
        e[i - 1] = e[i]
    e[m - 1] = 0.0
    for l in range(m):
        it = 0
        while True:
            mm = l
            while mm < m - 1:
                dd = abs(d[mm]) + abs(d[mm + 1])
                if abs(e[mm]) <= 2.3e-16 * dd + _TINY:
                    break
                mm += 1
            if mm == l:
                break
            it += 1
            if it > 60:
                break
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = np.hypot(g, 1.0)
            sg = r if g >= 0.0 else -r
            g = d[mm] - d[l] + e[l] / (g + sg)
            s = 1.0
            c = 1.0
            p = 0.0
            i = mm - 1
            broke = False
            while i >= l:
                f = s * e[i]
                bb = c * e[i]
                r = np.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[mm] = 0.0
                    broke = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * bb
                p = s * r
                d[i + 1] = g + p
                g = c * r - bb
                i -= 1
            if not broke:
                d[l] -= p
                e[l] = g
                e[mm] = 0.0
    d[:m].sort()
    for i in range(m):  # gram eigenvalues are >= 0; clamp fp negatives
        if d[i] < 0.0:
            d[i] = 0.0


@nb.njit(cache=True, nogil=True)
def sweep_chunk(
    OT, m, n, rand_u, B, pool, mins, argmin_j, argmin_cols, batch0_cols, j0,
    skip_mode, tables,
):
    """Process one chunk of batches; update running state in place.

    OT          : (n, m(m+1)/2) packed per-sample outer products
    rand_u      : (K, B) raw uint64 draws for this chunk
    pool        : length-n int64 scratch, must hold 0..n-1 on entry/exit
    mins        : (m,) running minima of ascending eigenvalues
    argmin_j    : (m,) batch index attaining each minimum (strict improvement)
    argmin_cols : (m, B) column indices of each argmin batch
    batch0_cols : (B,) filled with batch 0's columns when j0 == 0
    j0          : global index of the first batch in this chunk
    skip_mode   : use the Sturm certificate to skip non-improving batches
    tables      : (K, m) output eigenvalue rows (ascending), written only
                  when skip_mode is False

    Returns the number of fully solved batches.
    """
    K = rand_u.shape[0]
    ntri = OT.shape[1]
    Gt = np.empty(ntri)
    G = np.empty((m, m))
    d = np.empty(m)
    e = np.empty(m)
    dq = np.empty(m)
    eq = np.empty(m)
    th = np.empty(m)
    cnt = np.empty(m, dtype=np.int64)
    sp = np.empty(m)
    spm = np.empty(m)
    n_solved = 0
    for b in range(K):
        for t in range(B):
            j = t + np.uint64(rand_u[b, t]) % np.uint64(n - t)
            tmp = pool[t]
            pool[t] = pool[j]
            pool[j] = tmp
        if j0 == 0 and b == 0:
            for t in range(B):
                batch0_cols[t] = pool[t]
        for x in range(ntri):
            Gt[x] = 0.0
        for t in range(B):
            c = pool[t]
            for x in range(ntri):
                Gt[x] += OT[c, x]
        x = 0
        for i in range(m):
            for j2 in range(i, m):
                G[i, j2] = Gt[x]
                G[j2, i] = Gt[x]
                x += 1
        _tridiag(G, d, e, m)
        need = not skip_mode
        if skip_mode:
            tnorm = 0.0
            for i in range(m):
                tnorm += abs(d[i]) + 2.0 * abs(e[i])
            has_inf = False
            for q in range(m):
                if mins[q] == np.inf:
                    has_inf = True
                    break
                th[q] = mins[q] + 1e-10 * abs(mins[q]) + 1e-12 * tnorm
            if has_inf:
                need = True
            else:
                _sturm_all(d, e, m, th, cnt, sp, spm)
                for q in range(m):
                    if cnt[q] >= q + 1:
                        need = True
                        break
        if need:
            n_solved += 1
            for i in range(m):
                dq[i] = d[i]
                eq[i] = e[i]
            _tql_values(dq, eq, m)
            if not skip_mode:
                for i in range(m):
                    tables[b, i] = dq[i]
            for q in range(m):
                if dq[q] < mins[q]:
                    mins[q] = dq[q]
                    argmin_j[q] = j0 + b
                    for t in range(B):
                        argmin_cols[q, t] = pool[t]
        for t in range(B - 1, -1, -1):
            j = t + np.uint64(rand_u[b, t]) % np.uint64(n - t)
            tmp = pool[t]
            pool[t] = pool[j]
            pool[j] = tmp
    return n_solved
