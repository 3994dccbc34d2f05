"""Duality verification at two levels.

* Generator level (deterministic, tight): the generator applied to the
  normalized monomial F(., n) at a point x must equal the rate-weighted sum
  of F-differences over all dual jumps from n.  This identity involves no
  sampling and is the primary acceptance mechanism.
* Expectation level (statistical, loose): averages of F(X(t), n) over
  diffusion paths started at x must match averages of F(x, N(t)) over dual
  paths started at n.  Discretization bias enters through the SDE side, so
  the check also verifies that halving dt moves the estimate by less than
  one standard error.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._kernels import apply_em_step, make_kernel_model
from .diffusion import SdeConfig, locus_streams, simulate_batch_final
from .dual import RateTable, dual_rates, simulate_dual_batch
from .errors import ParameterError
from .kfun import KOracle
from .model import (
    ModelParams,
    generator_on_monomial,
    monomial,
    validate_dual_state,
    validate_frequency_state,
)

__all__ = [
    "DualityReport",
    "F_eval",
    "F_eval_batch",
    "generator_duality_residual",
    "mc_duality_check",
    "worker_count",
]


def worker_count() -> int:
    """Parallelism cap: WFDUAL_THREADS if set, else 1 (serial)."""
    raw = os.environ.get("WFDUAL_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def F_eval(x, n, oracle: KOracle) -> float:
    """Duality function F(x, n) = prod x^n / k(n)."""
    params = oracle.params
    x = validate_frequency_state(params, x)
    n = validate_dual_state(params, n)
    return monomial(x, n) * math.exp(-oracle.log_k(n))


def F_eval_batch(X, n, oracle: KOracle) -> np.ndarray:
    """F(x_s, n) for every row of X, shape (S,)."""
    params = oracle.params
    n = validate_dual_state(params, n)
    X = np.asarray(X, dtype=float)
    vals = np.prod(np.power(X, n[None, :]), axis=1)
    return vals * math.exp(-oracle.log_k(n))


def generator_duality_residual(params: ModelParams, x, n, oracle: KOracle) -> float:
    """Relative defect of the generator identity at (x, n).

    Left side: the diffusion generator applied to F(., n) at x.  Right side:
    sum of rate * [F(x, target) - F(x, n)] over all dual jumps.  Returns
    |lhs - rhs| / max(1, |lhs|); exact up to the oracle's own accuracy.
    """
    x = validate_frequency_state(params, x)
    n = validate_dual_state(params, n)
    if not np.any(n):
        raise ParameterError("generator residual is undefined at n = 0")
    lhs = generator_on_monomial(params, x, n) * math.exp(-oracle.log_k(n))
    Fn = F_eval(x, n, oracle)
    rhs = 0.0
    for ev in dual_rates(params, n, oracle):
        rhs += ev.rate * (F_eval(x, ev.target, oracle) - Fn)
    return abs(lhs - rhs) / max(1.0, abs(lhs))


@dataclass
class DualityReport:
    """Outcome of a duality verification run."""

    generator_residuals: list = field(default_factory=list)  # (x, n, residual)
    mc_lhs: tuple | None = None          # (estimate, std_error)
    mc_rhs: tuple | None = None
    z_score: float | None = None
    verdict: str = "pass"
    tolerances: dict = field(default_factory=dict)
    capped_fraction: float = 0.0
    dt_shift_in_se: float | None = None
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "generator_residuals": [
                {"x": np.asarray(x).tolist(), "n": np.asarray(n).tolist(), "residual": float(r)}
                for (x, n, r) in self.generator_residuals
            ],
            "mc_lhs": None if self.mc_lhs is None else list(map(float, self.mc_lhs)),
            "mc_rhs": None if self.mc_rhs is None else list(map(float, self.mc_rhs)),
            "z_score": None if self.z_score is None else float(self.z_score),
            "verdict": self.verdict,
            "tolerances": self.tolerances,
            "capped_fraction": float(self.capped_fraction),
            "dt_shift_in_se": None if self.dt_shift_in_se is None else float(self.dt_shift_in_se),
            "warnings": list(self.warnings),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def coupled_dt_shift(params, x, n, t, replicates, oracle, sde_cfg, seed=None):
    """Mean F-difference between a dt and a dt/2 run under coupled noise.

    The fine path takes two half steps per coarse step; the coarse path uses
    the pairwise-summed fine normals (common random numbers), so the
    difference isolates discretization bias instead of Monte Carlo noise.
    Returns (mean_difference, standard_error_of_difference).
    """
    x = validate_frequency_state(params, x)
    n = validate_dual_state(params, n)
    km = make_kernel_model(params)
    rngs = locus_streams(params, sde_cfg.seed if seed is None else seed)
    sizes = [params.alleles[l] for l in range(params.num_loci)]
    dt = sde_cfg.dt

    steps = int(math.floor(t / dt + 1e-9))
    remainder = t - steps * dt
    if remainder < 1e-12 * max(1.0, t):
        remainder = 0.0
    Xc = np.tile(x, (replicates, 1))
    Xf = np.tile(x, (replicates, 1))
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    plan = [dt] * steps + ([remainder] if remainder > 0.0 else [])
    for step_dt in plan:
        z1 = [rngs[l].standard_normal((replicates, sizes[l])) for l in range(params.num_loci)]
        z2 = [rngs[l].standard_normal((replicates, sizes[l])) for l in range(params.num_loci)]
        apply_em_step(km, Xf, step_dt / 2.0, z1, sde_cfg.eps)
        apply_em_step(km, Xf, step_dt / 2.0, z2, sde_cfg.eps)
        zc = [(a + b) * inv_sqrt2 for a, b in zip(z1, z2)]
        apply_em_step(km, Xc, step_dt, zc, sde_cfg.eps)
    diff = F_eval_batch(Xc, n, oracle) - F_eval_batch(Xf, n, oracle)
    return float(diff.mean()), float(diff.std(ddof=1) / math.sqrt(len(diff)))


def _dual_side(params, n, t, replicates, oracle, seed, cap, threads):
    table = RateTable(params, oracle)
    if threads <= 1 or replicates < 2 * threads:
        finals, truncated, _, table = simulate_dual_batch(
            params, n, t, oracle, seed, replicates, cap=cap, table=table
        )
        return finals, truncated, table
    bounds = np.linspace(0, replicates, threads + 1).astype(int)
    # warm the table single-threaded so workers mostly read
    table.ensure(table.state_id(n))

    def run(a, b):
        f, tr, _, _ = simulate_dual_batch(
            params, n, t, oracle, seed, b - a, cap=cap, table=table, rep_start=a
        )
        return f, tr

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))
    finals = np.concatenate([p[0] for p in parts])
    truncated = np.concatenate([p[1] for p in parts])
    return finals, truncated, table


def mc_duality_check(params: ModelParams, x, n, t: float, replicates: int,
                     oracle: KOracle, sde_cfg: SdeConfig, seed: int,
                     cap: int = 200, z_threshold: float = 3.0,
                     check_dt_sensitivity: bool = True,
                     capped_warn_fraction: float = 0.01) -> DualityReport:
    """Monte Carlo check of the expectation-level duality at (x, n, t).

    lhs: mean of F(X(t), n) over diffusion replicates started at x.
    rhs: mean of F(x, N(t)) over dual replicates started at n; paths that
    hit the growth cap are excluded and counted.
    """
    x = validate_frequency_state(params, x)
    n = validate_dual_state(params, n)
    if t <= 0:
        raise ParameterError("t must be positive")
    report = DualityReport(
        tolerances={
            "z_threshold": z_threshold,
            "dt": sde_cfg.dt,
            "replicates": replicates,
            "cap": cap,
        }
    )

    # diffusion side
    def lhs_run(cfg: SdeConfig):
        X = simulate_batch_final(params, x, t, cfg, replicates)
        F = F_eval_batch(X, n, oracle)
        return float(np.mean(F)), float(np.std(F, ddof=1) / math.sqrt(len(F)))

    lhs_est, lhs_se = lhs_run(sde_cfg)
    report.mc_lhs = (lhs_est, lhs_se)

    # dual side
    threads = worker_count()
    finals, truncated, table = _dual_side(params, n, t, replicates, oracle, seed, cap, threads)
    keep = ~truncated
    report.capped_fraction = float(np.mean(truncated))
    if report.capped_fraction > capped_warn_fraction:
        report.warnings.append(
            f"{report.capped_fraction:.2%} of dual paths hit the growth cap {cap}"
        )
    if not np.any(keep):
        raise ParameterError("all dual paths were capped; raise the cap")
    kept_sids = finals[keep]
    uniq, inv = np.unique(kept_sids, return_inverse=True)
    F_by_sid = np.array(
        [monomial(x, table.states[sid]) * math.exp(-table.log_k[sid]) for sid in uniq]
    )
    F_dual = F_by_sid[inv]
    rhs_est = float(np.mean(F_dual))
    rhs_se = float(np.std(F_dual, ddof=1) / math.sqrt(len(F_dual)))
    report.mc_rhs = (rhs_est, rhs_se)

    denom = math.sqrt(lhs_se**2 + rhs_se**2)
    report.z_score = abs(lhs_est - rhs_est) / denom if denom > 0 else 0.0

    ok = report.z_score < z_threshold
    if check_dt_sensitivity:
        shift, _ = coupled_dt_shift(
            params, x, n, t, min(replicates, 20000), oracle, sde_cfg, seed=sde_cfg.seed + 1
        )
        report.dt_shift_in_se = abs(shift) / lhs_se if lhs_se > 0 else 0.0
        report.tolerances["dt_shift_limit_se"] = 1.0
        ok = ok and report.dt_shift_in_se < 1.0
    report.verdict = "pass" if ok else "fail"
    return report
