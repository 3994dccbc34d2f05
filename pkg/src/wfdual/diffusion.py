"""Forward simulation of the coupled Wright-Fisher SDE.

The default scheme is projected Euler-Maruyama: drift plus blockwise
Wright-Fisher noise, followed by clamping negatives to zero and
renormalizing each locus block (the diffusion's boundary behaviour is kept
on the state space by projection).  A `jump_chain` scheme resamples each
locus multinomially with 1/dt pseudo-individuals per step and is offered to
cross-validate boundary behaviour.

Noise is drawn from one generator per locus; stream l of seed s is
numpy's SeedSequence(s, spawn_key=(l,)).  With J = 0 the loci therefore
reproduce exactly the trajectories of independent single-locus runs driven
by the corresponding sub-streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import em_advance, make_kernel_model
from .errors import ParameterError
from .model import ModelParams, validate_dual_state, validate_frequency_state

__all__ = [
    "SdeConfig",
    "TrajectoryRecord",
    "locus_streams",
    "em_step",
    "simulate_path",
    "simulate_batch_final",
    "estimate_moment",
]

SCHEMES = ("euler_projected", "jump_chain")


@dataclass(frozen=True)
class SdeConfig:
    """Discretization controls for the SDE integrator."""

    dt: float = 1e-3
    scheme: str = "euler_projected"
    seed: int = 0
    eps: float = 1e-12
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.eps < 0:
            raise ParameterError("eps must be nonnegative")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")


@dataclass
class TrajectoryRecord:
    """Recorded trajectory: times[i] is the time of states[i]."""

    times: np.ndarray
    states: np.ndarray

    def write_csv(self, fh, params: ModelParams) -> None:
        cols = ["t"] + [
            f"x_{l + 1}_{i + 1}" for l in range(params.num_loci) for i in range(params.alleles[l])
        ]
        fh.write(",".join(cols) + "\n")
        for t, row in zip(self.times, self.states):
            fh.write(",".join([f"{t:.12g}"] + [f"{v:.17g}" for v in row]) + "\n")


def locus_streams(params: ModelParams, seed: int):
    """One independent generator per locus (spawn_key = locus index)."""
    return [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(l,)))
        for l in range(params.num_loci)
    ]


def em_step(params: ModelParams, x, cfg: SdeConfig, rngs=None) -> np.ndarray:
    """One projected Euler-Maruyama step from x."""
    x = validate_frequency_state(params, x)
    if rngs is None:
        rngs = locus_streams(params, cfg.seed)
    X = np.array(x[None, :], dtype=float)
    em_advance(make_kernel_model(params), X, 1, cfg.dt, rngs, cfg.eps)
    return X[0]


def _jump_chain_advance(params: ModelParams, X, nsteps, dt, rngs):
    n_eff = max(1, round(1.0 / dt))
    km = make_kernel_model(params)
    offsets, U, rowsum, h, J = km
    for _ in range(nsteps):
        drift = X @ U - X * rowsum
        ht = X @ J + h
        for l in range(params.num_loci):
            a, b = offsets[l], offsets[l + 1]
            xb = X[:, a:b]
            s = np.einsum("ri,ri->r", xb, ht[:, a:b])
            drift[:, a:b] += xb * (ht[:, a:b] - s[:, None])
        P = np.clip(X + drift * dt, 0.0, None)
        for l in range(params.num_loci):
            a, b = offsets[l], offsets[l + 1]
            block = P[:, a:b]
            block /= block.sum(axis=1, keepdims=True)
            X[:, a:b] = rngs[l].multinomial(n_eff, block) / float(n_eff)


def _advance(params: ModelParams, X, nsteps, dt, cfg: SdeConfig, rngs):
    if cfg.scheme == "euler_projected":
        em_advance(make_kernel_model(params), X, nsteps, dt, rngs, cfg.eps)
    else:
        _jump_chain_advance(params, X, nsteps, dt, rngs)


def simulate_path(params: ModelParams, x0, horizon: float, cfg: SdeConfig,
                  rngs=None) -> TrajectoryRecord:
    """Simulate on [0, horizon], recording every cfg.record_every steps.

    Deterministic for a given cfg.seed.  A horizon that is not a multiple of
    dt ends with one shorter step so the final record sits exactly at the
    horizon.
    """
    x0 = validate_frequency_state(params, x0)
    if horizon < 0:
        raise ParameterError("horizon must be nonnegative")
    if rngs is None:
        rngs = locus_streams(params, cfg.seed)

    X = np.array(x0[None, :], dtype=float)
    times = [0.0]
    states = [X[0].copy()]
    if horizon == 0:
        return TrajectoryRecord(times=np.array(times), states=np.array(states))

    nsteps = int(math.floor(horizon / cfg.dt + 1e-9))
    remainder = horizon - nsteps * cfg.dt
    if remainder < 1e-12 * max(1.0, horizon):
        remainder = 0.0

    done = 0
    while done < nsteps:
        chunk = min(cfg.record_every, nsteps - done)
        _advance(params, X, chunk, cfg.dt, cfg, rngs)
        done += chunk
        times.append(done * cfg.dt)
        states.append(X[0].copy())
    if remainder > 0.0:
        _advance(params, X, 1, remainder, cfg, rngs)
        times.append(horizon)
        states.append(X[0].copy())
    return TrajectoryRecord(times=np.array(times), states=np.array(states))


def simulate_batch_final(params: ModelParams, x0, horizon: float, cfg: SdeConfig,
                         replicates: int, rngs=None) -> np.ndarray:
    """Final states at the horizon for a batch of replicates, shape (R, M).

    All replicates advance in lockstep under the per-locus streams, which
    keeps the batch reproducible from the seed alone.
    """
    x0 = validate_frequency_state(params, x0)
    if rngs is None:
        rngs = locus_streams(params, cfg.seed)
    X = np.tile(x0, (replicates, 1))
    nsteps = int(math.floor(horizon / cfg.dt + 1e-9))
    remainder = horizon - nsteps * cfg.dt
    if remainder < 1e-12 * max(1.0, horizon):
        remainder = 0.0
    if nsteps:
        _advance(params, X, nsteps, cfg.dt, cfg, rngs)
    if remainder > 0.0:
        _advance(params, X, 1, remainder, cfg, rngs)
    return X


def estimate_moment(params: ModelParams, n, burn_in: float, horizon: float,
                    cfg: SdeConfig) -> tuple:
    """Ergodic average of the monomial prod x^n with batch-means error.

    Requires parent-independent mutation (the regime with a known stationary
    law).  burn_in and horizon are in diffusion time units.
    """
    if not params.parent_independent:
        raise ParameterError("moment estimation requires parent-independent mutation")
    n = validate_dual_state(params, n)
    if not np.any(n):
        return 1.0, 0.0
    if horizon <= 0:
        raise ParameterError("horizon must be positive")

    x0 = np.concatenate([
        np.full(m, 1.0 / m) for m in params.alleles
    ])
    rec = simulate_path(params, x0, burn_in + horizon, cfg)
    keep = rec.times >= burn_in
    vals = np.prod(np.power(rec.states[keep], n[None, :]), axis=1)
    est = float(np.mean(vals))
    nb = max(10, min(64, len(vals) // 50))
    usable = (len(vals) // nb) * nb
    bm = vals[:usable].reshape(nb, -1).mean(axis=1)
    se = float(np.std(bm, ddof=1) / math.sqrt(nb))
    return est, se
