# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the hot simulation kernels (see `_pure` for contracts).

The Euler-Maruyama kernel has a C fast path for the all-two-allele block
layout (the hot case); other layouts delegate to the pure implementation.
The Gillespie kernel is fully general: it walks the lazily expanded rate
table with a C inner loop and only re-enters Python to expand a state the
first time it is visited.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log1p, sqrt

cnp.import_array()

from . import _pure

BACKEND = "speedups"


def em_advance(km, object Xobj, int nsteps, double dt, list rngs, double eps):
    offsets_, U_, rowsum_, h_, J_ = km
    cdef const cnp.int64_t[::1] offsets = offsets_
    cdef int L = offsets.shape[0] - 1
    cdef int l
    for l in range(L):
        if offsets[l + 1] - offsets[l] != 2:
            _pure.em_advance(km, Xobj, nsteps, dt, rngs, eps)
            return

    cdef double[:, ::1] X = Xobj
    cdef const double[:, ::1] U = U_
    cdef const double[:, ::1] J = J_
    cdef const double[::1] rowsum = rowsum_
    cdef const double[::1] h = h_
    cdef Py_ssize_t R = X.shape[0]
    cdef int M = X.shape[1]
    cdef double sq = sqrt(dt)

    cdef Py_ssize_t chunk = nsteps
    cdef Py_ssize_t limit = 4_000_000 // max(1, R * M)
    if limit < 1:
        limit = 1
    if chunk > limit:
        chunk = limit

    cdef cnp.ndarray ht_arr = np.empty((R, M), dtype=np.float64)
    cdef double[:, ::1] ht = ht_arr
    cdef list zblocks = [None] * L
    cdef double[:, :, ::1] zb
    cdef Py_ssize_t pos = chunk  # force a draw on the first step
    cdef Py_ssize_t r
    cdef int step, i, j, a
    cdef double x0, x1, ht0, ht1, s, mu0, mu1, d0, d1, v, amp, acc, tot

    for step in range(nsteps):
        if pos >= chunk:
            remaining = nsteps - step
            this = chunk if remaining > chunk else remaining
            for l in range(L):
                zblocks[l] = rngs[l].standard_normal((this, R, 2))
            pos = 0
        for r in range(R):
            for i in range(M):
                acc = h[i]
                for j in range(M):
                    acc += J[i, j] * X[r, j]
                ht[r, i] = acc
        for l in range(L):
            a = offsets[l]
            zb = zblocks[l]
            for r in range(R):
                x0 = X[r, a]
                x1 = X[r, a + 1]
                ht0 = ht[r, a]
                ht1 = ht[r, a + 1]
                s = x0 * ht0 + x1 * ht1
                mu0 = x0 * U[a, a] + x1 * U[a + 1, a] - x0 * rowsum[a]
                mu1 = x0 * U[a, a + 1] + x1 * U[a + 1, a + 1] - x1 * rowsum[a + 1]
                d0 = mu0 + x0 * (ht0 - s)
                d1 = mu1 + x1 * (ht1 - s)
                v = x0 * x1
                if v < 0.0:
                    v = 0.0
                amp = sqrt(0.5 * v) * (zb[pos, r, 0] - zb[pos, r, 1])
                x0 = x0 + d0 * dt + amp * sq
                x1 = x1 + d1 * dt - amp * sq
                if x0 < 0.0:
                    x0 = 0.0
                if x1 < 0.0:
                    x1 = 0.0
                tot = x0 + x1
                if tot <= 0.0:
                    x0 = 0.5
                    x1 = 0.5
                    tot = 1.0
                X[r, a] = x0 / tot
                X[r, a + 1] = x1 / tot
        pos += 1


def gillespie_finals(table, long sid0, double horizon, long seed, long replicates,
                     long cap, long rep_start=0):
    finals_arr = np.empty(replicates, dtype=np.int64)
    trunc_arr = np.zeros(replicates, dtype=bool)
    counts_arr = np.zeros(replicates, dtype=np.int64)
    cdef cnp.int64_t[::1] finals = finals_arr
    cdef cnp.uint8_t[::1] trunc = trunc_arr.view(np.uint8)
    cdef cnp.int64_t[::1] counts = counts_arr

    ensure = table.ensure
    cdef list row_cum = table.row_cum
    cdef list row_target = table.row_target
    cdef list total_rate = table.total_rate
    cdef list sum_n = table.sum_n

    cdef long rep, sid, n_ev, k, nrow
    cdef double t, total, u1, u2, pick
    cdef Py_ssize_t ptr
    cdef bint truncated
    cdef double[::1] buf
    cdef double[::1] cum
    cdef cnp.int64_t[::1] tgt
    SeedSequence = np.random.SeedSequence
    default_rng = np.random.default_rng

    for rep in range(replicates):
        rng = default_rng(SeedSequence(seed, spawn_key=(rep_start + rep,)))
        buf = rng.random(64)
        ptr = 0
        sid = sid0
        t = 0.0
        n_ev = 0
        truncated = False
        while True:
            if <double>total_rate[sid] < 0.0:
                ensure(sid)
            total = <double>total_rate[sid]
            if total <= 0.0:
                break
            if ptr >= 63:
                buf = rng.random(64)
                ptr = 0
            u1 = buf[ptr]
            u2 = buf[ptr + 1]
            ptr += 2
            t += -log1p(-u1) / total
            if t >= horizon:
                break
            cum = row_cum[sid]
            tgt = row_target[sid]
            nrow = cum.shape[0]
            pick = u2 * total
            k = 0
            while k < nrow - 1 and cum[k] <= pick:
                k += 1
            sid = tgt[k]
            n_ev += 1
            if <long>sum_n[sid] > cap:
                truncated = True
                break
        finals[rep] = sid
        trunc[rep] = 1 if truncated else 0
        counts[rep] = n_ev
    return finals_arr, trunc_arr, counts_arr
