"""Stationary density (reduced coordinates), normalizing constants, and MCMC.

With parent-independent mutation the stationary law is a product of
Dirichlet factors tilted by exp(2V), known up to the constant Z.  Z is
available in closed form for the one-locus two-allele shape, through the
coupling integral for the two-locus two-allele shape, and by
Dirichlet-weighted tensor quadrature for any other parent-independent shape
of reduced dimension at most four.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, UnsupportedShapeError
from .kfun import log_I_series
from .model import ModelParams, validate_frequency_state
from .quadrature import simplex_jacobi_rule
from .specfun import log_beta, log_kummer_1f1

__all__ = [
    "reduce_state",
    "expand_reduced",
    "expand_reduced_batch",
    "pi_unnormalized",
    "log_pi_unnormalized",
    "normalizing_Z",
    "log_normalizing_Z",
    "stationary_density",
    "density_grid",
    "write_density_grid_csv",
    "McmcDiagnostics",
    "mcmc_sample",
]

_REDUCED_TOL = 1e-12


def reduce_state(params: ModelParams, x) -> np.ndarray:
    """Drop the last coordinate of each locus block."""
    x = validate_frequency_state(params, x)
    return np.concatenate([x[params.block(l)][:-1] for l in range(params.num_loci)])


def _reduced_blocks(params: ModelParams):
    sizes = [m - 1 for m in params.alleles]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    return sizes, offs


def expand_reduced(params: ModelParams, xbar) -> np.ndarray:
    """Append 1 - (block sum) per locus to recover the full state."""
    xbar = np.asarray(xbar, dtype=float)
    sizes, offs = _reduced_blocks(params)
    if xbar.shape != (int(offs[-1]),):
        raise ParameterError(f"reduced state must have length {int(offs[-1])}, got {xbar.shape}")
    parts = []
    for l, size in enumerate(sizes):
        blk = xbar[offs[l]:offs[l + 1]]
        rest = 1.0 - float(np.sum(blk))
        if np.any(blk < -_REDUCED_TOL) or rest < -_REDUCED_TOL:
            raise ParameterError(f"reduced block {l + 1} leaves the simplex: {blk}")
        parts.append(np.concatenate([blk, [max(rest, 0.0)]]))
    return np.concatenate(parts)


def expand_reduced_batch(params: ModelParams, Xbar) -> np.ndarray:
    """Vectorized expand_reduced for an (S, M - L) array."""
    Xbar = np.asarray(Xbar, dtype=float)
    sizes, offs = _reduced_blocks(params)
    parts = []
    for l, size in enumerate(sizes):
        blk = Xbar[:, offs[l]:offs[l + 1]]
        rest = 1.0 - blk.sum(axis=1, keepdims=True)
        parts.append(np.concatenate([blk, rest], axis=1))
    return np.concatenate(parts, axis=1)


def _concentrations(params: ModelParams) -> np.ndarray:
    if not params.parent_independent:
        raise UnsupportedShapeError("stationary density requires parent-independent mutation")
    conc = np.concatenate([2.0 * params.mutation_vector(l) for l in range(params.num_loci)])
    if np.any(conc <= 0):
        raise UnsupportedShapeError("stationary density requires strictly positive mutation rates")
    return conc


def log_pi_unnormalized(params: ModelParams, xbar) -> float:
    """ln of the Dirichlet-product factor; +-inf signalled at the boundary."""
    conc = _concentrations(params)
    x = expand_reduced(params, xbar)
    expo = conc - 1.0
    total = 0.0
    for xi, ei in zip(x, expo):
        if xi == 0.0:
            if ei < 0.0:
                return math.inf
            if ei > 0.0:
                return -math.inf
        else:
            total += ei * math.log(xi)
    return total


def pi_unnormalized(params: ModelParams, xbar) -> float:
    """Product of Dirichlet kernels prod x_i^(2 u_i - 1) over all loci."""
    return math.exp(log_pi_unnormalized(params, xbar))


# -- normalizing constant -----------------------------------------------------

_Z_CACHE: dict = {}
_GENERIC_ORDERS = (24, 36, 54, 81)
_MAX_GENERIC_DIM = 4


def _two_locus_couplings(params: ModelParams):
    Jb = params.J[params.block(0), params.block(1)]
    if Jb[0, 1] != 0 or Jb[1, 0] != 0:
        raise UnsupportedShapeError("two-locus route needs a diagonal coupling block")
    return float(Jb[0, 0]), float(Jb[1, 1])


def log_normalizing_Z(params: ModelParams) -> float:
    """ln Z for the supported shapes; unsupported shapes raise."""
    key = params.fingerprint()
    hit = _Z_CACHE.get(key)
    if hit is not None:
        return hit

    conc = _concentrations(params)
    if params.alleles == (2,):
        # exp(2 h2) B(2u1, 2u2) 1F1(2u1, 2u1 + 2u2, 2(h1 - h2))
        z = 2.0 * (params.h[0] - params.h[1])
        val = (
            2.0 * params.h[1]
            + log_beta(conc[0], conc[1])
            + log_kummer_1f1(conc[0], conc[0] + conc[1], z)
        )
    elif params.alleles == (2, 2) and not np.any(params.h != 0):
        J1, J2 = _two_locus_couplings(params)
        val = log_I_series(conc[0], conc[1], conc[2], conc[3], J1, J2)
    else:
        val = _log_Z_quadrature(params, conc)
    _Z_CACHE[key] = val
    return val


def normalizing_Z(params: ModelParams) -> float:
    return math.exp(log_normalizing_Z(params))


def _log_Z_quadrature(params: ModelParams, conc) -> float:
    """Generic route: Dirichlet-weighted tensor quadrature of exp(2V)."""
    dim = params.M - params.num_loci
    if dim > _MAX_GENERIC_DIM:
        raise UnsupportedShapeError(
            f"no normalizing-constant route for this shape (reduced dimension {dim} > {_MAX_GENERIC_DIM})"
        )
    prev = None
    for order in _GENERIC_ORDERS:
        rules = [
            simplex_jacobi_rule(conc[params.block(l)], order)
            for l in range(params.num_loci)
        ]
        nodes = rules[0][0]
        weights = rules[0][1]
        for xr, wr, _ in rules[1:]:
            a = np.repeat(nodes, xr.shape[0], axis=0)
            b = np.tile(xr, (nodes.shape[0], 1))
            nodes = np.concatenate([a, b], axis=1)
            weights = np.repeat(weights, wr.shape[0]) * np.tile(wr, weights.shape[0])
        log_mass = sum(r[2] for r in rules)
        V = nodes @ params.h + 0.5 * np.einsum("si,ij,sj->s", nodes, params.J, nodes)
        cur = log_mass + math.log(float(weights @ np.exp(2.0 * V)))
        if prev is not None and abs(cur - prev) <= 1e-10 * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise UnsupportedShapeError("generic quadrature for Z failed to stabilize")


# -- density ------------------------------------------------------------------


def log_stationary_density(params: ModelParams, xbar, normalized: bool = True) -> float:
    lp = log_pi_unnormalized(params, xbar)
    if not math.isfinite(lp):
        return lp
    x = expand_reduced(params, xbar)
    lp += 2.0 * float(x @ params.h + 0.5 * x @ params.J @ x)
    if normalized:
        lp -= log_normalizing_Z(params)
    return lp


def stationary_density(params: ModelParams, xbar, normalized: bool = True) -> float:
    """Stationary density p(xbar) = pi(xbar) exp(2 V) / Z on the reduced space.

    With normalized=False the unnormalized value is returned (no Z needed),
    which also serves shapes without a normalizing-constant route.
    """
    return math.exp(log_stationary_density(params, xbar, normalized))


def density_grid(params: ModelParams, resolution: int):
    """Midpoint grid of the two-locus 2x2 density; returns (xs, ys, P).

    P[i, j] is the density at (xs[i], ys[j]).  Cell midpoints keep the
    evaluation away from boundary singularities when 2u < 1.
    """
    if params.alleles != (2, 2):
        raise UnsupportedShapeError("density grids are defined for the two-locus 2x2 shape")
    if resolution < 1:
        raise ParameterError("resolution must be >= 1")
    conc = _concentrations(params)
    log_Z = log_normalizing_Z(params)
    xs = (np.arange(resolution) + 0.5) / resolution
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    logp = (
        (conc[0] - 1.0) * np.log(X)
        + (conc[1] - 1.0) * np.log(1.0 - X)
        + (conc[2] - 1.0) * np.log(Y)
        + (conc[3] - 1.0) * np.log(1.0 - Y)
    )
    J1, J2 = _two_locus_couplings(params)
    h = params.h
    logp += 2.0 * (
        h[0] * X + h[1] * (1 - X) + h[2] * Y + h[3] * (1 - Y)
        + J1 * X * Y + J2 * (1 - X) * (1 - Y)
    )
    return xs, xs, np.exp(logp - log_Z)


def write_density_grid_csv(fh, xs, ys, P) -> None:
    fh.write("x,y,p\n")
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            fh.write(f"{x:.12g},{y:.12g},{P[i, j]:.17g}\n")


# -- MCMC sampler ---------------------------------------------------------------


@dataclass
class McmcDiagnostics:
    acceptance_rate: float
    ess: float
    step_scale: float
    tuning_warning: bool


def _log_target_z(params: ModelParams, conc, z, offs_reduced, sizes):
    """Log density in additive log-ratio coordinates (Jacobian included).

    In z-space the Dirichlet exponents shift by one and the boundary
    disappears: log target = sum 2 u_i log x_i + 2 V(x).
    """
    x = np.empty(params.M)
    for l, size in enumerate(sizes):
        zb = z[offs_reduced[l]:offs_reduced[l + 1]]
        mx = max(0.0, float(np.max(zb))) if size else 0.0
        ez = np.exp(zb - mx)
        denom = math.exp(-mx) + float(np.sum(ez))
        b = params.block(l)
        x[b.start:b.stop - 1] = ez / denom
        x[b.stop - 1] = math.exp(-mx) / denom
    lp = float(conc @ np.log(x))
    lp += 2.0 * float(x @ params.h + 0.5 * x @ params.J @ x)
    return lp, x


def mcmc_sample(params: ModelParams, count: int, burn_in: int, seed: int,
                thin: int = 10, target_acceptance: float = 0.3):
    """Random-walk Metropolis targeting pi * exp(2V) on the reduced space.

    Proposals are Gaussian steps in per-locus additive log-ratio (logit)
    coordinates, with the step scale adapted toward the target acceptance
    rate during burn-in only.  Returns (samples, diagnostics) where samples
    is (count, M - L); an acceptance rate outside [0.1, 0.7] raises a
    tuning warning.
    """
    conc = _concentrations(params)
    if count < 1 or burn_in < 0 or thin < 1:
        raise ParameterError("need count >= 1, burn_in >= 0, thin >= 1")
    sizes, offs = _reduced_blocks(params)
    dim = int(offs[-1])
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    z = np.zeros(dim)
    lp, x = _log_target_z(params, conc, z, offs, sizes)
    scale = 2.38 / math.sqrt(dim)

    total_steps = burn_in + count * thin
    normals = rng.standard_normal((total_steps, dim))
    log_us = np.log(rng.random(total_steps))

    samples = np.empty((count, dim))
    kept = 0
    accepted_main = 0
    window_acc = 0
    for step in range(total_steps):
        zp = z + scale * normals[step]
        lpp, xp = _log_target_z(params, conc, zp, offs, sizes)
        if log_us[step] < lpp - lp:
            z, lp, x = zp, lpp, xp
            if step >= burn_in:
                accepted_main += 1
            else:
                window_acc += 1
        if step < burn_in:
            if (step + 1) % 50 == 0:
                rate = window_acc / 50.0
                scale *= math.exp(0.7 * (rate - target_acceptance))
                window_acc = 0
        elif (step - burn_in + 1) % thin == 0:
            samples[kept] = reduce_state(params, x)
            kept += 1
    assert kept == count

    main_steps = count * thin
    acc_rate = accepted_main / main_steps if main_steps else 0.0
    ess = _min_ess(samples)
    warn = not (0.1 <= acc_rate <= 0.7)
    if warn:
        warnings.warn(
            f"MCMC acceptance rate {acc_rate:.3f} outside [0.1, 0.7] after adaptation",
            RuntimeWarning,
            stacklevel=2,
        )
    return samples, McmcDiagnostics(
        acceptance_rate=acc_rate, ess=ess, step_scale=scale, tuning_warning=warn
    )


def _min_ess(samples: np.ndarray) -> float:
    """Smallest per-coordinate effective sample size (initial positive
    autocorrelation estimator)."""
    S, dim = samples.shape
    best = float(S)
    for d in range(dim):
        v = samples[:, d] - samples[:, d].mean()
        var = float(v @ v) / S
        if var == 0.0:
            continue
        tau = 1.0
        for lag in range(1, min(S // 2, 1000)):
            rho = float(v[:-lag] @ v[lag:]) / ((S - lag) * var)
            if rho <= 0.0:
                break
            tau += 2.0 * rho
        best = min(best, S / tau)
    return best
