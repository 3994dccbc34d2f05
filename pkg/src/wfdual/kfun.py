"""Oracles for the stationary moment function k(n) and its ratios.

k(n) is the expectation of the monomial prod (X_i^(l))^(n_i^(l)) under the
stationary law.  Four interchangeable implementations are provided:

* `DirichletOracle`   -- no selection, parent-independent mutation (closed form);
* `SingleLocusOracle` -- one locus, two alleles, selection (Beta/Kummer form);
* `TwoLocusOracle`    -- two loci, two alleles, cross-locus selection only
                          (double series in Beta and Kummer functions, with a
                          tensor quadrature of the defining integral as an
                          independent second path);
* `MonteCarloOracle`  -- generic parent-independent shape, sampled stationary law.

Everything is stored and combined as logarithms; ratios are exponentiated
log differences, so deep states never underflow.
"""

from __future__ import annotations

import math

import numpy as np

from . import dual as _dual
from .errors import ConvergenceError, NumericError, OracleMisuseError
from .model import ModelParams, validate_dual_state
from .quadrature import gauss_jacobi_01
from .specfun import (
    DEFAULT_CONTROL,
    SeriesControl,
    kummer_1f1,
    log_beta,
    log_kummer_1f1,
    log_rising,
)

__all__ = [
    "KOracle",
    "DirichletOracle",
    "SingleLocusOracle",
    "TwoLocusOracle",
    "MonteCarloOracle",
    "make_oracle",
    "k_dirichlet",
    "k_single_locus",
    "k_two_locus",
    "k_monte_carlo",
    "I_series",
    "log_I_series",
    "I_quadrature",
    "log_I_quadrature",
    "k_recursion_residual",
]


class KOracle:
    """Base class: cached log k(n) plus derived values and ratios.

    Instances are immutable after construction; the internal memo only ever
    maps a state to one deterministic value, so concurrent reads and
    idempotent writes are safe under the GIL.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self._cache: dict = {}

    def _log_k(self, n: np.ndarray) -> float:
        raise NotImplementedError

    def log_k(self, n) -> float:
        n = validate_dual_state(self.params, n)
        key = tuple(int(v) for v in n)
        hit = self._cache.get(key)
        if hit is None:
            hit = 0.0 if not any(key) else float(self._log_k(n))
            self._cache[key] = hit
        return hit

    def k(self, n) -> float:
        return math.exp(self.log_k(n))

    def ratio(self, n_to, n_from) -> float:
        """k(n_to) / k(n_from), formed in log space."""
        return math.exp(self.log_k(n_to) - self.log_k(n_from))


class DirichletOracle(KOracle):
    """Factorized Dirichlet moments: valid only with no selection."""

    def __init__(self, params: ModelParams):
        if not params.parent_independent:
            raise OracleMisuseError("Dirichlet moments require parent-independent mutation")
        if np.any(params.h != 0) or np.any(params.J != 0):
            raise OracleMisuseError("Dirichlet moments require h = 0 and J = 0")
        super().__init__(params)
        self._conc = [2.0 * params.mutation_vector(l) for l in range(params.num_loci)]
        for c in self._conc:
            if np.any(c <= 0):
                raise OracleMisuseError("Dirichlet moments need strictly positive mutation rates")

    def _log_k(self, n):
        total = 0.0
        for l in range(self.params.num_loci):
            nb = n[self.params.block(l)]
            c = self._conc[l]
            total += sum(log_rising(c[i], int(nb[i])) for i in range(len(c)))
            total -= log_rising(float(np.sum(c)), int(np.sum(nb)))
        return total


class SingleLocusOracle(KOracle):
    """One locus, two alleles, parent-independent mutation, selection h.

    k(n) is the ratio of exponentially weighted Beta integrals; by the Euler
    integral representation each evaluates to
    exp(2 h_2) B(n_1 + 2u_1, n_2 + 2u_2) 1F1(n_1 + 2u_1, n + 2u_1 + 2u_2, 2(h_1 - h_2)).
    The common factor exp(2 h_2) cancels in the ratio.
    """

    def __init__(self, params: ModelParams, ctrl: SeriesControl | None = None):
        if params.alleles != (2,):
            raise OracleMisuseError("single-locus oracle requires exactly one locus with two alleles")
        if not params.parent_independent:
            raise OracleMisuseError("single-locus oracle requires parent-independent mutation")
        super().__init__(params)
        self.ctrl = ctrl or DEFAULT_CONTROL
        u = params.mutation_vector(0)
        if np.any(u <= 0):
            raise OracleMisuseError("single-locus oracle needs strictly positive mutation rates")
        self._a = 2.0 * u
        self._z = 2.0 * (params.h[0] - params.h[1])
        self._log_Z0 = log_beta(self._a[0], self._a[1]) + log_kummer_1f1(
            self._a[0], self._a[0] + self._a[1], self._z, self.ctrl
        )

    def _log_k(self, n):
        a1 = n[0] + self._a[0]
        a2 = n[1] + self._a[1]
        return (
            log_beta(a1, a2)
            + log_kummer_1f1(a1, a1 + a2, self._z, self.ctrl)
            - self._log_Z0
        )


# -- the two-locus integral I -----------------------------------------------


def log_I_series(a1: float, a2: float, b1: float, b2: float, J1: float, J2: float,
                 ctrl: SeriesControl | None = None) -> float:
    """ln of the coupling integral I(a1,a2,b1,b2) via its double series.

    The series alternates in the outer index, so the stop rule is
    conservative: terminate only after five consecutive outer terms
    contribute less than rel_tol of the running sum.  The inner sum over k
    is finite and evaluated exactly.  J2 = 0 collapses the outer series and
    is handled by a dedicated single-series branch (the printed form divides
    by J2).
    """
    if ctrl is None:
        ctrl = DEFAULT_CONTROL
    if min(a1, a2, b1, b2) <= 0:
        raise OracleMisuseError(f"I requires positive Beta parameters, got {(a1, a2, b1, b2)}")
    if J1 < 0 or J2 < 0:
        raise OracleMisuseError("I requires nonnegative couplings")

    log_pref = log_beta(a1, a2) + log_beta(b1, b2)

    if J2 == 0.0:
        # I = B(a1,a2) B(b1,b2) sum_k [a1]_k/[a1+a2]_k [b1]_k/[b1+b2]_k (2J1)^k / k!
        total = 0.0
        term = 1.0
        small = 0
        for k in range(ctrl.max_terms):
            total += term
            if abs(term) <= ctrl.rel_tol * abs(total):
                small += 1
                if small >= 5:
                    return log_pref + math.log(total)
            else:
                small = 0
            term *= (a1 + k) / (a1 + a2 + k) * (b1 + k) / (b1 + b2 + k) * (2.0 * J1) / (k + 1.0)
        raise ConvergenceError("I series (J2 = 0 branch) did not converge", partial=total, terms=ctrl.max_terms)

    alpha = (J1 + J2) / J2
    # inner coefficients: [b1]_k/[b1+b2]_k * 1F1(k+b1, k+b1+b2, -2J2), with the
    # Kummer transform applied; its factor e^(-2J2) cancels the e^(2J2) prefactor.
    chat: list = []
    chat_ratio = [1.0]

    def ensure_chat(upto: int):
        while len(chat) <= upto:
            k = len(chat)
            if k > 0:
                chat_ratio.append(chat_ratio[-1] * (b1 + k - 1) / (b1 + b2 + k - 1))
            chat.append(chat_ratio[k] * kummer_1f1(b2, k + b1 + b2, 2.0 * J2, ctrl))

    total = 0.0
    ratio_a = 1.0       # [a1]_n / [a1+a2]_n
    power = 1.0         # (-2 J2)^n / n!
    small = 0
    for n in range(ctrl.max_terms):
        ensure_chat(n)
        inner = 0.0
        binom = 1.0
        sign_pow = 1.0  # (-alpha)^k
        for k in range(n + 1):
            inner += binom * sign_pow * chat[k]
            binom *= (n - k) / (k + 1.0)
            sign_pow *= -alpha
        term = ratio_a * power * inner
        total += term
        if abs(term) <= ctrl.rel_tol * abs(total):
            small += 1
            if small >= 5:
                break
        else:
            small = 0
        ratio_a *= (a1 + n) / (a1 + a2 + n)
        power *= (-2.0 * J2) / (n + 1.0)
    else:
        raise ConvergenceError("I series did not converge", partial=total, terms=ctrl.max_terms)

    if not total > 0:
        raise NumericError(f"I series summed to a nonpositive value ({total})")
    return log_pref + math.log(total)


def I_series(a1, a2, b1, b2, J1, J2, ctrl: SeriesControl | None = None) -> float:
    """The coupling integral I via its Beta/Kummer double series."""
    return math.exp(log_I_series(a1, a2, b1, b2, J1, J2, ctrl))


_QUAD_ORDERS = (16, 24, 36, 54, 81, 122, 183)


def log_I_quadrature(a1: float, a2: float, b1: float, b2: float, J1: float, J2: float,
                     rel_tol: float = 1e-12) -> float:
    """ln I via tensorized Gauss-Jacobi quadrature of the defining integral.

    The Jacobi weights absorb the endpoint singularities; the remaining
    integrand exp(2[J1 x y + J2 (1-x)(1-y)]) is entire, so the rule converges
    geometrically.  The order is escalated until two successive orders agree
    to rel_tol.
    """
    if min(a1, a2, b1, b2) <= 0:
        raise OracleMisuseError(f"I requires positive Beta parameters, got {(a1, a2, b1, b2)}")
    prev = None
    for order in _QUAD_ORDERS:
        nx, wx, lmx = gauss_jacobi_01(order, a1, a2)
        ny, wy, lmy = gauss_jacobi_01(order, b1, b2)
        W = np.exp(2.0 * (J1 * np.outer(nx, ny) + J2 * np.outer(1.0 - nx, 1.0 - ny)))
        val = float(wx @ W @ wy)
        cur = lmx + lmy + math.log(val)
        if prev is not None and abs(cur - prev) <= rel_tol * max(1.0, abs(cur)):
            return cur
        prev = cur
    raise NumericError(
        f"I quadrature failed to stabilize at order {_QUAD_ORDERS[-1]} for {(a1, a2, b1, b2, J1, J2)}"
    )


def I_quadrature(a1, a2, b1, b2, J1, J2, rel_tol: float = 1e-12) -> float:
    return math.exp(log_I_quadrature(a1, a2, b1, b2, J1, J2, rel_tol))


class TwoLocusOracle(KOracle):
    """Two loci, two alleles each, h = 0, couplings J1 (type 1/1), J2 (type 2/2).

    k(n) = I(n + 2u) / I(2u) with I evaluated by the double series; the
    quadrature path is exposed separately for cross-checking.
    """

    def __init__(self, params: ModelParams, ctrl: SeriesControl | None = None):
        if params.alleles != (2, 2):
            raise OracleMisuseError("two-locus oracle requires two loci with two alleles each")
        if not params.parent_independent:
            raise OracleMisuseError("two-locus oracle requires parent-independent mutation")
        if np.any(params.h != 0):
            raise OracleMisuseError("two-locus oracle requires h = 0")
        Jb = params.J[params.block(0), params.block(1)]
        if Jb[0, 1] != 0 or Jb[1, 0] != 0:
            raise OracleMisuseError("two-locus oracle requires a diagonal coupling block (J1, J2 only)")
        super().__init__(params)
        self.ctrl = ctrl or DEFAULT_CONTROL
        self.J1 = float(Jb[0, 0])
        self.J2 = float(Jb[1, 1])
        conc = np.concatenate([2.0 * params.mutation_vector(0), 2.0 * params.mutation_vector(1)])
        if np.any(conc <= 0):
            raise OracleMisuseError("two-locus oracle needs strictly positive mutation rates")
        self._conc = conc
        self._log_Z0 = log_I_series(*conc, self.J1, self.J2, self.ctrl)

    def _log_k(self, n):
        a = n + self._conc
        return log_I_series(a[0], a[1], a[2], a[3], self.J1, self.J2, self.ctrl) - self._log_Z0

    def log_k_quadrature(self, n, rel_tol: float = 1e-12) -> float:
        """Independent evaluation of log k(n) through the quadrature path."""
        n = validate_dual_state(self.params, n)
        a = n + self._conc
        return (
            log_I_quadrature(a[0], a[1], a[2], a[3], self.J1, self.J2, rel_tol)
            - log_I_quadrature(*self._conc, self.J1, self.J2, rel_tol)
        )


class MonteCarloOracle(KOracle):
    """Generic parent-independent fallback based on stationary MCMC samples."""

    def __init__(self, params: ModelParams, count: int = 20000, burn_in: int = 5000,
                 seed: int = 0, thin: int = 10):
        if not params.parent_independent:
            raise OracleMisuseError("Monte Carlo oracle requires parent-independent mutation")
        super().__init__(params)
        self.count = count
        self.burn_in = burn_in
        self.seed = seed
        self.thin = thin
        self._samples = None
        self.diagnostics = None

    def _ensure_samples(self):
        if self._samples is None:
            from .stationary import expand_reduced_batch, mcmc_sample

            reduced, diag = mcmc_sample(
                self.params, self.count, self.burn_in, self.seed, thin=self.thin
            )
            self._samples = expand_reduced_batch(self.params, reduced)
            self.diagnostics = diag
        return self._samples

    def k_with_error(self, n) -> tuple:
        """(estimate, batch-means standard error) of the stationary moment."""
        n = validate_dual_state(self.params, n)
        if not np.any(n):
            return 1.0, 0.0
        X = self._ensure_samples()
        vals = np.prod(np.power(X, n[None, :]), axis=1)
        est = float(np.mean(vals))
        nb = max(10, int(math.sqrt(len(vals))))
        usable = (len(vals) // nb) * nb
        bm = vals[:usable].reshape(nb, -1).mean(axis=1)
        se = float(np.std(bm, ddof=1) / math.sqrt(nb))
        return est, se

    def _log_k(self, n):
        est, _ = self.k_with_error(n)
        if not est > 0:
            raise NumericError(f"Monte Carlo k estimate nonpositive for n = {n}")
        return math.log(est)


# -- spec-facing functional wrappers ------------------------------------------


def k_dirichlet(params: ModelParams, n) -> float:
    return DirichletOracle(params).k(n)


def k_single_locus(params: ModelParams, n) -> float:
    return SingleLocusOracle(params).k(n)


def k_two_locus(params: ModelParams, n, cross_check: bool = False, rel_tol: float = 1e-8) -> float:
    """Series-path k(n); with cross_check=True also runs the quadrature path
    and raises NumericError if the two disagree beyond rel_tol."""
    oracle = TwoLocusOracle(params)
    val = oracle.k(n)
    if cross_check:
        other = math.exp(oracle.log_k_quadrature(n))
        if abs(val - other) > rel_tol * max(abs(val), abs(other)):
            raise NumericError(
                f"two-locus k paths disagree: series {val} vs quadrature {other}"
            )
    return val


def k_monte_carlo(params: ModelParams, n, count: int = 20000, burn_in: int = 5000,
                  seed: int = 0, thin: int = 10) -> tuple:
    """(estimate, standard error) of k(n) from stationary MCMC samples."""
    oracle = MonteCarloOracle(params, count=count, burn_in=burn_in, seed=seed, thin=thin)
    return oracle.k_with_error(n)


_ORACLE_NAMES = ("dirichlet", "single", "two-locus", "mc")


def make_oracle(params: ModelParams, name: str, **kwargs) -> KOracle:
    """Factory used by the CLI; name in {dirichlet, single, two-locus, mc}."""
    if name == "dirichlet":
        return DirichletOracle(params)
    if name == "single":
        return SingleLocusOracle(params)
    if name == "two-locus":
        return TwoLocusOracle(params)
    if name == "mc":
        return MonteCarloOracle(params, **kwargs)
    raise OracleMisuseError(f"unknown oracle '{name}'; expected one of {_ORACLE_NAMES}")


def auto_oracle(params: ModelParams, **kwargs) -> KOracle:
    """Pick the sharpest applicable oracle for this parameter shape."""
    no_sel = not (np.any(params.h != 0) or np.any(params.J != 0))
    if params.parent_independent and no_sel:
        return DirichletOracle(params)
    for cls in (SingleLocusOracle, TwoLocusOracle):
        try:
            return cls(params)
        except OracleMisuseError:
            continue
    return MonteCarloOracle(params, **kwargs)


def k_recursion_residual(params: ModelParams, n, oracle: KOracle) -> float:
    """Normalized violation of the zero row-sum identity at state n.

    Off-diagonal rates come from the dual-process enumeration with the given
    oracle; the diagonal is the closed-form coefficient that does not involve
    k at all.  The residual vanishes exactly when the oracle is the true
    stationary moment function.
    """
    n = validate_dual_state(params, n)
    if not np.any(n):
        raise OracleMisuseError("recursion residual is undefined at n = 0")
    events = _dual.dual_rates(params, n, oracle)
    off_sum = sum(ev.rate for ev in events)
    diag = _dual.explicit_diag(params, n)
    if diag == 0.0:
        raise NumericError(f"degenerate diagonal rate at n = {n}")
    return abs(off_sum + diag) / abs(diag)
