"""Pure numpy implementations of the hot simulation kernels.

These are the fallback twins of the compiled extension in `_speedups.pyx`;
both expose the same two entry points with identical contracts:

* `em_advance`       -- advance a batch of diffusion states through nsteps
                        projected Euler-Maruyama steps, in place;
* `gillespie_finals` -- run a batch of dual-process paths to a horizon
                        against a lazily expanded rate table.

Random number consumption is part of the contract (per-locus generators for
the diffusion, one block-buffered uniform stream per path for the jump
process), so a given seed selects the same trajectory on either backend.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericError

BACKEND = "pure"


def make_kernel_model(params):
    """Pack the parameter arrays the stepping kernels need."""
    return (
        np.asarray(params.offsets, dtype=np.int64),
        np.ascontiguousarray(params._U_full),
        np.ascontiguousarray(params._u_rowsum),
        np.ascontiguousarray(params.h),
        np.ascontiguousarray(params.J),
    )


def _noise_block(xb: np.ndarray, z: np.ndarray, eps: float) -> np.ndarray:
    """Spectral square root of diag(x) - x x^T applied to standard normals.

    For two alleles the factorization is closed form; larger blocks go
    through a batched symmetric eigendecomposition with eigenvalues clamped
    at zero (values below -eps trigger a numeric error).
    """
    m = xb.shape[1]
    if m == 2:
        v = xb[:, 0] * xb[:, 1]
        if np.any(v < -eps):
            raise NumericError("diffusion block lost positive semidefiniteness")
        amp = np.sqrt(np.maximum(v, 0.0) * 0.5) * (z[:, 0] - z[:, 1])
        return np.stack([amp, -amp], axis=1)
    D = -xb[:, :, None] * xb[:, None, :]
    idx = np.arange(m)
    D[:, idx, idx] += xb
    w, V = np.linalg.eigh(D)
    if np.any(w < -eps):
        raise NumericError("diffusion block factorization failed beyond tolerance")
    w = np.sqrt(np.clip(w, 0.0, None))
    return np.einsum("rij,rj->ri", V, w * np.einsum("rji,rj->ri", V, z))


def apply_em_step(km, X: np.ndarray, dt: float, normals, eps: float) -> None:
    """One projected Euler-Maruyama step of X (R, M) with given normals.

    `normals` is one (R, M_l) standard-normal array per locus.  Exposing the
    noise lets callers couple runs at different step sizes (common random
    numbers) for discretization-bias checks.
    """
    offsets, U, rowsum, h, J = km
    L = len(offsets) - 1
    sq = np.sqrt(dt)
    drift = X @ U
    drift -= X * rowsum
    ht = X @ J
    ht += h
    Y = np.empty_like(X)
    for l in range(L):
        a, b = offsets[l], offsets[l + 1]
        xb = X[:, a:b]
        s = np.einsum("ri,ri->r", xb, ht[:, a:b])
        drift[:, a:b] += xb * (ht[:, a:b] - s[:, None])
        Y[:, a:b] = _noise_block(xb, normals[l], eps)
    X += drift * dt
    X += Y * sq
    np.clip(X, 0.0, None, out=X)
    for l in range(L):
        a, b = offsets[l], offsets[l + 1]
        s = X[:, a:b].sum(axis=1)
        bad = s <= 0.0
        if np.any(bad):
            X[bad, a:b] = 1.0 / (b - a)
            s[bad] = 1.0
        X[:, a:b] /= s[:, None]


def em_advance(km, X: np.ndarray, nsteps: int, dt: float, rngs, eps: float) -> None:
    """Advance X (R, M) through nsteps Euler-Maruyama steps, in place.

    Each step adds the mutation and interaction drift, per-locus Wright-
    Fisher noise drawn from the per-locus generators in `rngs`, then clamps
    negatives and renormalizes every locus block back onto its simplex.
    """
    offsets, U, rowsum, h, J = km
    L = len(offsets) - 1
    R = X.shape[0]
    sizes = [offsets[l + 1] - offsets[l] for l in range(L)]
    for _ in range(nsteps):
        normals = [rngs[l].standard_normal((R, sizes[l])) for l in range(L)]
        apply_em_step(km, X, dt, normals, eps)


_UNIFORM_BLOCK = 64


def gillespie_finals(table, sid0: int, horizon: float, seed: int, replicates: int, cap: int,
                     rep_start: int = 0):
    """Simulate `replicates` dual paths from state sid0 up to the horizon.

    Returns (final_sids, truncated, n_events) as arrays of length
    replicates.  Path j draws uniforms in blocks of 64 from a generator
    seeded by SeedSequence(seed, spawn_key=(rep_start + j,)); the first
    uniform of a step sets the holding time, the second picks the event.
    The rep_start offset lets callers split a batch across workers without
    changing any path.
    """
    finals = np.empty(replicates, dtype=np.int64)
    truncated = np.zeros(replicates, dtype=bool)
    counts = np.zeros(replicates, dtype=np.int64)

    ensure = table.ensure
    row_cum = table.row_cum
    row_target = table.row_target
    total_rate = table.total_rate
    sum_n = table.sum_n

    log1p = math.log1p
    for rep in range(replicates):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep_start + rep,)))
        buf = rng.random(_UNIFORM_BLOCK).tolist()
        ptr = 0
        sid = sid0
        t = 0.0
        n_ev = 0
        trunc = False
        while True:
            total = total_rate[sid]
            if total < 0.0:
                ensure(sid)
                total = total_rate[sid]
            if total <= 0.0:
                break  # absorbing
            if ptr >= _UNIFORM_BLOCK - 1:
                buf = rng.random(_UNIFORM_BLOCK).tolist()
                ptr = 0
            u1 = buf[ptr]
            u2 = buf[ptr + 1]
            ptr += 2
            t += -log1p(-u1) / total
            if t >= horizon:
                break
            cum = row_cum[sid]
            k = cum.searchsorted(u2 * total, side="right")
            if k >= cum.shape[0]:
                k = cum.shape[0] - 1
            sid = int(row_target[sid][k])
            n_ev += 1
            if sum_n[sid] > cap:
                trunc = True
                break
        finals[rep] = sid
        truncated[rep] = trunc
        counts[rep] = n_ev
    return finals, truncated, counts
