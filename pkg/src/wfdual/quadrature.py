"""Gauss-Jacobi quadrature on [0,1] and Dirichlet-weighted simplex rules.

The Jacobi weight absorbs the endpoint singularities t^(p-1) (1-t)^(q-1)
that appear whenever a Beta-like exponent is below one, so integrands passed
to these rules are the smooth remainder only.  Weights are returned
normalized to sum one together with the log of the total mass, which keeps
large-parameter integrals representable.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError

__all__ = ["gauss_jacobi_01", "simplex_jacobi_rule"]


def gauss_jacobi_01(n: int, p: float, q: float):
    """n-point rule for integrals of t^(p-1) (1-t)^(q-1) f(t) over [0,1].

    Returns (nodes, weights, log_mass) with nodes in (0,1), weights
    normalized to sum one and log_mass = ln B(p,q), so that

        integral = exp(log_mass) * sum(weights * f(nodes)).

    Built with the Golub-Welsch algorithm: eigendecomposition of the
    symmetric tridiagonal recurrence matrix of the Jacobi polynomials for
    the weight (1-x)^alpha (1+x)^beta on [-1,1], alpha = q-1, beta = p-1.
    """
    if n < 1:
        raise ParameterError(f"need at least one node, got {n}")
    if not (p > 0 and q > 0):
        raise ParameterError(f"Jacobi exponents must be positive, got ({p}, {q})")

    alpha = q - 1.0
    beta = p - 1.0
    ab = alpha + beta

    i = np.arange(n, dtype=float)
    diag = np.empty(n)
    diag[0] = (beta - alpha) / (ab + 2.0)
    if n > 1:
        ii = i[1:]
        diag[1:] = (beta**2 - alpha**2) / ((2 * ii + ab) * (2 * ii + ab + 2.0))
        j = np.arange(1, n, dtype=float)
        s = 2 * j + ab
        off = np.sqrt(4 * j * (j + alpha) * (j + beta) * (j + ab) / (s**2 * (s**2 - 1.0)))
    else:
        off = np.empty(0)

    jac = np.diag(diag)
    if n > 1:
        jac += np.diag(off, 1) + np.diag(off, -1)
    x, vecs = np.linalg.eigh(jac)

    nodes = 0.5 * (x + 1.0)
    weights = vecs[0, :] ** 2
    weights /= weights.sum()  # guard rounding; exact sum is already 1
    log_mass = math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q)
    return nodes, weights, log_mass


def simplex_jacobi_rule(concentrations, order: int):
    """Tensor rule for Dirichlet-weighted integrals over a probability simplex.

    For concentrations c = (c_1, ..., c_M), builds nodes x (N, M) on the
    interior of the simplex and weights w (sum one) with log_mass such that

        integral over the reduced simplex of  prod_i x_i^(c_i - 1) f(x)
        = exp(log_mass) * sum(w * f(x)).

    Uses the stick-breaking substitution x_i = s_i prod_{j<i} (1 - s_j),
    which factorizes the Dirichlet weight into independent Beta weights
    B(c_j, c_{j+1} + ... + c_M) handled by one Jacobi rule per level.
    """
    c = np.asarray(concentrations, dtype=float)
    if c.ndim != 1 or c.size < 2:
        raise ParameterError("need at least two concentration parameters")
    if not np.all(c > 0):
        raise ParameterError(f"concentrations must be positive, got {c}")

    m = c.size
    tails = np.concatenate([np.cumsum(c[::-1])[::-1][1:], [0.0]])  # tails[j] = sum_{i>j} c_i
    rules = [gauss_jacobi_01(order, c[j], tails[j]) for j in range(m - 1)]

    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    s = np.stack([g.ravel() for g in grids], axis=1)  # (N, m-1)
    w = np.ones(s.shape[0])
    for wg in wgrids:
        w = w * wg.ravel()

    x = np.empty((s.shape[0], m))
    remaining = np.ones(s.shape[0])
    for j in range(m - 1):
        x[:, j] = s[:, j] * remaining
        remaining = remaining * (1.0 - s[:, j])
    x[:, m - 1] = remaining

    log_mass = sum(r[2] for r in rules)
    return x, w, log_mass
