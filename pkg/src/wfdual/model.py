"""Model parameters, state validation, and the diffusion's local characteristics.

States are plain numpy vectors throughout: a frequency state is a float
vector of length M that concatenates one probability simplex per locus, and
a dual state is a nonnegative integer vector of the same block layout.
`ModelParams` owns the block structure and all static parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

__all__ = [
    "ModelParams",
    "SIMPLEX_TOL",
    "validate_frequency_state",
    "validate_dual_state",
    "monomial",
    "potential_V",
    "grad_V",
    "drift_mu",
    "tilde_h",
    "interaction_g",
    "diffusion_d",
    "generator_on_monomial",
    "generator_on_monomial_batch",
]

SIMPLEX_TOL = 1e-10
_ROWSUM_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Static parameters of a coupled Wright-Fisher model.

    Fields
    ------
    alleles:   allele counts (M_1, ..., M_L), each >= 2.
    mutation:  per-locus mutation rate matrices u[l][i, j] >= 0 (rate i -> j).
    h:         single-locus selection, nonnegative vector of length M.
    J:         pairwise selection, nonnegative symmetric (M, M) block matrix
               with zero diagonal blocks.
    """

    alleles: tuple
    mutation: tuple
    h: np.ndarray
    J: np.ndarray

    # derived, filled in __post_init__
    num_loci: int = field(init=False, repr=False)
    M: int = field(init=False, repr=False)
    offsets: tuple = field(init=False, repr=False)
    parent_independent: bool = field(init=False, repr=False)

    def __post_init__(self):
        alleles = tuple(int(m) for m in self.alleles)
        if len(alleles) < 1:
            raise ParameterError("need at least one locus")
        if any(m < 2 for m in alleles):
            raise ParameterError(f"each locus needs >= 2 alleles, got {alleles}")
        object.__setattr__(self, "alleles", alleles)
        L = len(alleles)
        M = sum(alleles)
        offs = (0,) + tuple(np.cumsum(alleles).tolist())
        object.__setattr__(self, "num_loci", L)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "offsets", offs)

        if len(self.mutation) != L:
            raise ParameterError(f"expected {L} mutation matrices, got {len(self.mutation)}")
        mats = []
        for l, u in enumerate(self.mutation):
            u = np.array(u, dtype=float)
            m = alleles[l]
            if u.shape != (m, m):
                raise ParameterError(f"mutation matrix for locus {l + 1} must be {m}x{m}, got {u.shape}")
            if np.any(u < 0):
                raise ParameterError(f"mutation rates must be nonnegative (locus {l + 1})")
            u.setflags(write=False)
            mats.append(u)
        object.__setattr__(self, "mutation", tuple(mats))

        h = np.array(self.h, dtype=float)
        if h.shape != (M,):
            raise ParameterError(f"h must have length {M}, got shape {h.shape}")
        if np.any(h < 0):
            raise ParameterError("h must be nonnegative")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

        J = np.array(self.J, dtype=float)
        if J.shape != (M, M):
            raise ParameterError(f"J must be {M}x{M}, got {J.shape}")
        if np.any(J < 0):
            raise ParameterError("J must be nonnegative")
        if np.max(np.abs(J - J.T)) > _ROWSUM_TOL:
            raise ParameterError("J must be symmetric (J^(lr) = J^(rl)^T)")
        for l in range(L):
            b = self.block(l)
            if np.any(J[b, b] != 0.0):
                raise ParameterError(f"diagonal block J^({l + 1},{l + 1}) must be zero")
        J.setflags(write=False)
        object.__setattr__(self, "J", J)

        pi = all(np.all(u == u[0]) for u in mats)
        object.__setattr__(self, "parent_independent", pi)

        # flat mutation arrays used by drift evaluation and the sde kernels
        U = np.zeros((M, M))
        for l in range(L):
            b = self.block(l)
            U[b, b] = mats[l]
        U.setflags(write=False)
        rowsum = U.sum(axis=1)
        rowsum.setflags(write=False)
        object.__setattr__(self, "_U_full", U)
        object.__setattr__(self, "_u_rowsum", rowsum)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def make(cls, alleles, mutation, h=None, J=None) -> "ModelParams":
        """Build params from per-locus mutation specs (vector or matrix).

        A length-M_l vector v means parent-independent rates u[i, j] = v[j];
        an (M_l, M_l) array is used as the full rate matrix.
        """
        alleles = tuple(int(m) for m in alleles)
        M = sum(alleles)
        mats = []
        for l, spec in enumerate(mutation):
            a = np.array(spec, dtype=float)
            if a.ndim == 1:
                mats.append(np.tile(a, (alleles[l], 1)))
            else:
                mats.append(a)
        if h is None:
            h = np.zeros(M)
        if J is None:
            J = np.zeros((M, M))
        return cls(alleles=alleles, mutation=tuple(mats), h=h, J=J)

    @classmethod
    def from_theta_P(cls, alleles, theta, P, h=None, J=None) -> "ModelParams":
        """Build params from the (theta_l, P^(l)) mutation presentation."""
        alleles = tuple(int(m) for m in alleles)
        if len(theta) != len(alleles) or len(P) != len(alleles):
            raise ParameterError("theta and P must have one entry per locus")
        mats = []
        for l, (t, p) in enumerate(zip(theta, P)):
            t = float(t)
            if t < 0:
                raise ParameterError(f"theta[{l}] must be nonnegative, got {t}")
            p = np.array(p, dtype=float)
            if p.shape != (alleles[l], alleles[l]):
                raise ParameterError(f"P for locus {l + 1} must be {alleles[l]}x{alleles[l]}")
            if np.any(p < 0):
                raise ParameterError(f"P for locus {l + 1} must be nonnegative")
            if np.max(np.abs(p.sum(axis=1) - 1.0)) > _ROWSUM_TOL:
                raise ParameterError(f"rows of P for locus {l + 1} must sum to 1 within {_ROWSUM_TOL}")
            mats.append(0.5 * t * p)
        M = sum(alleles)
        if h is None:
            h = np.zeros(M)
        if J is None:
            J = np.zeros((M, M))
        return cls(alleles=alleles, mutation=tuple(mats), h=h, J=J)

    @classmethod
    def from_json(cls, doc) -> "ModelParams":
        """Deserialize from the JSON parameter document.

        Keys: "loci" (allele counts), "mutation" (per-locus, each either
        {"u": vector-or-matrix} or {"theta": scalar, "P": matrix}),
        optional "h" (flat list) and "J" (list of {"l", "r", "matrix"}
        blocks with 1-based locus indices, upper triangle only).
        """
        if isinstance(doc, (str, bytes)):
            doc = json.loads(doc)
        try:
            alleles = tuple(int(m) for m in doc["loci"])
            mutation_spec = doc["mutation"]
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"parameter document missing required key: {exc}") from exc
        if len(mutation_spec) != len(alleles):
            raise ParameterError("mutation must have one entry per locus")

        mats = []
        for l, entry in enumerate(mutation_spec):
            if "u" in entry:
                a = np.array(entry["u"], dtype=float)
                mats.append(np.tile(a, (alleles[l], 1)) if a.ndim == 1 else a)
            elif "theta" in entry:
                t = float(entry["theta"])
                p = np.array(entry["P"], dtype=float)
                if t < 0:
                    raise ParameterError(f"theta for locus {l + 1} must be nonnegative")
                if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > _ROWSUM_TOL:
                    raise ParameterError(f"P for locus {l + 1} must be stochastic (rows sum to 1)")
                mats.append(0.5 * t * p)
            else:
                raise ParameterError(f"mutation entry for locus {l + 1} needs 'u' or 'theta'/'P'")

        M = sum(alleles)
        h = np.array(doc.get("h", np.zeros(M)), dtype=float)
        J = np.zeros((M, M))
        offs = (0,) + tuple(np.cumsum(alleles).tolist())
        seen = set()
        for blk in doc.get("J", []):
            l, r = int(blk["l"]), int(blk["r"])
            if not (1 <= l <= len(alleles) and 1 <= r <= len(alleles)) or l == r:
                raise ParameterError(f"J block indices must name two distinct loci, got ({l}, {r})")
            if (min(l, r), max(l, r)) in seen:
                raise ParameterError(f"duplicate J block for loci ({l}, {r})")
            seen.add((min(l, r), max(l, r)))
            m = np.array(blk["matrix"], dtype=float)
            if m.shape != (alleles[l - 1], alleles[r - 1]):
                raise ParameterError(f"J block ({l}, {r}) must be {alleles[l - 1]}x{alleles[r - 1]}")
            J[offs[l - 1]:offs[l], offs[r - 1]:offs[r]] = m
            J[offs[r - 1]:offs[r], offs[l - 1]:offs[l]] = m.T
        return cls(alleles=alleles, mutation=tuple(mats), h=h, J=J)

    @classmethod
    def from_json_file(cls, path) -> "ModelParams":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    # -- block access ---------------------------------------------------------

    def block(self, l: int) -> slice:
        """Index slice of locus l (0-based) within a flat length-M vector."""
        return slice(self.offsets[l], self.offsets[l + 1])

    def split(self, v):
        """Split a flat vector into its per-locus blocks (views)."""
        return [v[self.block(l)] for l in range(self.num_loci)]

    def locus_totals(self, n):
        """Per-locus totals n^(l) of a dual state."""
        return np.array([int(np.sum(n[self.block(l)])) for l in range(self.num_loci)])

    def mutation_vector(self, l: int) -> np.ndarray:
        """Parent-independent target rates u_j^(l); errors otherwise."""
        if not self.parent_independent:
            raise ParameterError("mutation is not parent-independent")
        return self.mutation[l][0]

    def fingerprint(self) -> bytes:
        """Stable byte key identifying this parameter set (used for caches)."""
        parts = [np.asarray(self.alleles, dtype=np.int64).tobytes()]
        parts.extend(u.tobytes() for u in self.mutation)
        parts.append(self.h.tobytes())
        parts.append(self.J.tobytes())
        return b"|".join(parts)


# -- state validation ---------------------------------------------------------


def validate_frequency_state(params: ModelParams, x, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Check a flat frequency vector: shape, range, per-locus sums = 1.

    Out-of-tolerance inputs are rejected, never renormalized.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.M,):
        raise ParameterError(f"state must have length {params.M}, got shape {x.shape}")
    if np.any(x < -tol) or np.any(x > 1 + tol):
        raise ParameterError("frequencies must lie in [0, 1]")
    for l in range(params.num_loci):
        s = float(np.sum(x[params.block(l)]))
        if abs(s - 1.0) > tol:
            raise ParameterError(f"locus {l + 1} frequencies sum to {s}, expected 1 within {tol}")
    return x


def validate_dual_state(params: ModelParams, n) -> np.ndarray:
    """Check a flat dual-state vector: shape and nonnegative integers."""
    n = np.asarray(n)
    if n.shape != (params.M,):
        raise ParameterError(f"dual state must have length {params.M}, got shape {n.shape}")
    if not np.issubdtype(n.dtype, np.integer):
        ni = np.rint(n).astype(np.int64)
        if np.any(np.abs(n - ni) > 0):
            raise ParameterError("dual state entries must be integers")
        n = ni
    if np.any(n < 0):
        raise ParameterError("dual state entries must be nonnegative")
    return n.astype(np.int64)


def monomial(x, n) -> float:
    """prod x_i^(n_i) with the convention 0^0 = 1."""
    return float(np.prod(np.power(np.asarray(x, dtype=float), np.asarray(n))))


# -- drift, interaction, diffusion --------------------------------------------


def potential_V(params: ModelParams, x) -> float:
    """Selection potential V(x) = x.h + 0.5 x.J.x."""
    x = validate_frequency_state(params, x)
    return float(x @ params.h + 0.5 * x @ params.J @ x)


def grad_V(params: ModelParams, x) -> np.ndarray:
    """Gradient h + J x (J symmetric)."""
    x = validate_frequency_state(params, x)
    return params.h + params.J @ x


def drift_mu(params: ModelParams, x) -> np.ndarray:
    """Mutation drift, component (l,i):  sum_j [u_ji x_j - u_ij x_i]."""
    x = validate_frequency_state(params, x)
    return x @ params._U_full - x * params._u_rowsum


def tilde_h(params: ModelParams, x, l: int) -> np.ndarray:
    """Effective selection at locus l: h^(l) + sum_{r != l} J^(lr) x^(r)."""
    x = validate_frequency_state(params, x)
    full = params.h + params.J @ x  # diagonal blocks of J are zero
    return full[params.block(l)]


def interaction_g(params: ModelParams, x) -> np.ndarray:
    """Interaction drift g(x) = D(x) grad V(x), assembled blockwise."""
    x = validate_frequency_state(params, x)
    ht = params.h + params.J @ x
    g = np.empty(params.M)
    for l in range(params.num_loci):
        b = params.block(l)
        xb = x[b]
        g[b] = xb * (ht[b] - float(xb @ ht[b]))
    return g


def diffusion_d(params: ModelParams, x, l: int) -> np.ndarray:
    """Diffusion block d^(l)_ij = x_i (delta_ij - x_j) at locus l."""
    x = validate_frequency_state(params, x)
    xb = x[params.block(l)]
    return np.diag(xb) - np.outer(xb, xb)


# -- generator acting on monomials ---------------------------------------------


def generator_on_monomial(params: ModelParams, x, n) -> float:
    """Apply the diffusion generator to m(x) = prod x^n at the point x.

    Uses the analytic derivatives of the monomial, written with exponent
    arithmetic instead of division so boundary points are handled by the
    factor-vanishing convention (a coordinate at zero with n_i >= 1 simply
    kills the corresponding terms).
    """
    x = validate_frequency_state(params, x)
    n = validate_dual_state(params, n)
    if not np.any(n):
        return 0.0

    mu = drift_mu(params, x)
    g = interaction_g(params, x)
    total = 0.0
    for l in range(params.num_loci):
        b = params.block(l)
        xb = x[b]
        nb = n[b]
        for i in range(len(xb)):
            ni = int(nb[i])
            if ni == 0:
                continue
            off = params.offsets[l]
            e_i = np.zeros(params.M, dtype=np.int64)
            e_i[off + i] = 1
            total += (mu[off + i] + g[off + i]) * ni * monomial(x, n - e_i)
            if ni >= 2:
                d_ii = xb[i] * (1.0 - xb[i])
                total += 0.5 * d_ii * ni * (ni - 1) * monomial(x, n - 2 * e_i)
            for j in range(len(xb)):
                nj = int(nb[j])
                if j == i or nj == 0:
                    continue
                e_j = np.zeros(params.M, dtype=np.int64)
                e_j[off + j] = 1
                d_ij = -xb[i] * xb[j]
                total += 0.5 * d_ij * ni * nj * monomial(x, n - e_i - e_j)
    return float(total)


def generator_on_monomial_batch(params: ModelParams, X, n) -> np.ndarray:
    """Vectorized generator application at many strictly interior points.

    X has shape (S, M) with every coordinate positive; returns shape (S,).
    Division by coordinates is safe in the interior, which makes this path
    much faster than the pointwise version for sampler output.
    """
    X = np.asarray(X, dtype=float)
    n = validate_dual_state(params, n)
    if X.ndim != 2 or X.shape[1] != params.M:
        raise ParameterError(f"X must be (S, {params.M})")
    if np.any(X <= 0):
        raise ParameterError("batch generator evaluation requires interior states")
    if not np.any(n):
        return np.zeros(X.shape[0])

    P = np.prod(np.power(X, n[None, :]), axis=1)
    inflow = X @ params._U_full
    mu = inflow - X * params._u_rowsum
    ht = X @ params.J + params.h[None, :]
    g = np.empty_like(X)
    for l in range(params.num_loci):
        b = params.block(l)
        s = np.sum(X[:, b] * ht[:, b], axis=1, keepdims=True)
        g[:, b] = X[:, b] * (ht[:, b] - s)

    nf = n.astype(float)
    drift_part = np.sum((mu + g) * nf[None, :] / X, axis=1) * P

    diff_part = np.zeros(X.shape[0])
    for l in range(params.num_loci):
        b = params.block(l)
        nb = nf[b]
        nl = float(np.sum(nb))
        # diagonal: 0.5 x_i(1-x_i) n_i(n_i-1) m / x_i^2
        coef = 0.5 * nb * (nb - 1.0)
        diff_part += np.sum(coef[None, :] * (1.0 / X[:, b] - 1.0), axis=1) * P
        # off-diagonal: 0.5 (-x_i x_j) n_i n_j m / (x_i x_j), i != j
        diff_part += -0.5 * (nl * nl - float(np.sum(nb * nb))) * P
    return drift_part + diff_part
