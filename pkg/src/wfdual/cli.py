"""Command-line interface.

Subcommands: simulate-diffusion, simulate-dual, k-eval, verify, density-grid.
Exit codes: 0 success, 2 validation error, 3 numeric error, 4 verification
failure.  All randomness is reproducible from --seed; when omitted, a seed
is drawn from entropy and printed.  Output files are written atomically
(temp file + rename), so invalid input never leaves partial output behind.
"""

from __future__ import annotations

import argparse
import math
import os
import secrets
import sys
import tempfile

import numpy as np

from . import __version__
from .diffusion import SdeConfig, simulate_path
from .dual import gillespie_simulate, write_dual_path_csv
from .errors import NumericError, ParameterError, WfdualError
from .harness import generator_duality_residual, mc_duality_check
from .kfun import (
    KOracle,
    MonteCarloOracle,
    TwoLocusOracle,
    auto_oracle,
    k_recursion_residual,
    make_oracle,
)
from .model import ModelParams, validate_dual_state, validate_frequency_state
from .stationary import density_grid, write_density_grid_csv

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_VERIFICATION = 4


def _atomic_write(path: str, render) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".wfdual-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            render(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_params(path: str) -> ModelParams:
    if not os.path.exists(path):
        raise ParameterError(f"parameter file not found: {path}")
    return ModelParams.from_json_file(path)


def _parse_vector(text: str, dtype=float) -> np.ndarray:
    try:
        return np.array([dtype(tok) for tok in text.replace(";", ",").split(",") if tok.strip() != ""])
    except ValueError as exc:
        raise ParameterError(f"could not parse vector {text!r}: {exc}") from exc


def _resolve_seed(args) -> int:
    if args.seed is None:
        seed = secrets.randbits(48)
        print(f"seed: {seed} (drawn from entropy; pass --seed {seed} to reproduce)")
        return seed
    return args.seed


# -- subcommands ---------------------------------------------------------------


def cmd_simulate_diffusion(args) -> int:
    params = _load_params(args.params)
    x0 = validate_frequency_state(params, _parse_vector(args.x0))
    seed = _resolve_seed(args)
    cfg = SdeConfig(dt=args.dt, scheme=args.scheme, seed=seed, record_every=args.record_every)
    rec = simulate_path(params, x0, args.t, cfg)
    _atomic_write(args.out, lambda fh: rec.write_csv(fh, params))
    print(f"wrote {len(rec.times)} records to {args.out}")
    return EXIT_OK


def cmd_simulate_dual(args) -> int:
    params = _load_params(args.params)
    n0 = validate_dual_state(params, _parse_vector(args.n0, dtype=int))
    seed = _resolve_seed(args)
    oracle = make_oracle(params, args.k_oracle, **({"seed": seed} if args.k_oracle == "mc" else {}))
    path = gillespie_simulate(params, n0, args.t, oracle, seed=seed, cap=args.cap)
    _atomic_write(args.out, lambda fh: write_dual_path_csv(path, params, fh))
    note = " (truncated at cap)" if path.truncated else ""
    print(f"wrote {len(path.events)} events to {args.out}{note}")
    return EXIT_OK


def _k_eval_rows(params, n, methods, args, seed):
    rows = []
    for method in methods:
        if method == "auto":
            oracle = auto_oracle(params)
            rows.append((type(oracle).__name__, oracle.k(n), oracle.log_k(n), None))
        elif method == "mc":
            oracle = MonteCarloOracle(params, count=args.mc_count, seed=seed)
            est, se = oracle.k_with_error(n)
            rows.append(("mc", est, math.log(est) if est > 0 else float("-inf"), se))
        elif method == "two-locus":
            oracle = TwoLocusOracle(params)
            rows.append(("two-locus-series", oracle.k(n), oracle.log_k(n), None))
            lq = oracle.log_k_quadrature(n)
            rows.append(("two-locus-quadrature", math.exp(lq), lq, None))
        else:
            oracle = make_oracle(params, method)
            rows.append((method, oracle.k(n), oracle.log_k(n), None))
    return rows


def cmd_k_eval(args) -> int:
    params = _load_params(args.params)
    n = validate_dual_state(params, _parse_vector(args.n, dtype=int))
    seed = _resolve_seed(args)
    methods = [m.strip() for m in args.method.split(",") if m.strip()]
    rows = _k_eval_rows(params, n, methods, args, seed)

    print(f"{'method':<24}{'k':<24}{'log k':<24}{'se':<12}")
    for name, k, logk, se in rows:
        se_txt = f"{se:.3e}" if se is not None else "-"
        print(f"{name:<24}{k:<24.15g}{logk:<24.15g}{se_txt:<12}")

    values = [r[1] for r in rows]
    if len(values) > 1:
        spread = (max(values) - min(values)) / max(abs(v) for v in values)
        if spread > args.tol:
            print(f"method disagreement: relative spread {spread:.3e} exceeds tol {args.tol:.3e}",
                  file=sys.stderr)
            return EXIT_VERIFICATION
    return EXIT_OK


class _PerturbedOracle(KOracle):
    """Diagnostic wrapper: inflates k on every state with odd total count."""

    def __init__(self, inner: KOracle, fraction: float):
        super().__init__(inner.params)
        self._inner = inner
        self._shift = math.log1p(fraction)

    def _log_k(self, n):
        value = self._inner.log_k(n)
        if int(np.sum(n)) % 2 == 1:
            value += self._shift
        return value


def cmd_verify(args) -> int:
    params = _load_params(args.params)
    seed = _resolve_seed(args)
    oracle = auto_oracle(params, seed=seed)
    if args.inject_rate_error:
        oracle = _PerturbedOracle(oracle, args.inject_rate_error / 100.0)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0FFEE,)))

    if args.mode == "generator":
        residuals = []
        for _ in range(args.trials):
            x = np.concatenate([
                (lambda v: v / v.sum())(rng.uniform(0.05, 1.0, m)) for m in params.alleles
            ])
            n = rng.integers(0, args.max_total + 1, params.M)
            while n.sum() == 0 or n.sum() > args.max_total:
                n = rng.integers(0, args.max_total + 1, params.M)
            residuals.append((x, n, generator_duality_residual(params, x, n, oracle)))
        worst = max(r for (_, _, r) in residuals)
        verdict = "pass" if worst < args.tol else "fail"
        print(f"generator duality: {len(residuals)} trials, worst residual {worst:.3e} "
              f"(tol {args.tol:.1e}) -> {verdict}")
        payload = {
            "mode": "generator",
            "trials": args.trials,
            "worst_residual": worst,
            "tol": args.tol,
            "verdict": verdict,
        }
    elif args.mode == "recursion":
        from itertools import product

        worst = 0.0
        count = 0
        for n in product(range(args.max_total + 1), repeat=params.M):
            total = sum(n)
            if total == 0 or total > args.max_total:
                continue
            worst = max(worst, k_recursion_residual(params, np.array(n), oracle))
            count += 1
        verdict = "pass" if worst < args.tol else "fail"
        print(f"k-recursion: {count} states (total <= {args.max_total}), worst residual "
              f"{worst:.3e} (tol {args.tol:.1e}) -> {verdict}")
        payload = {
            "mode": "recursion",
            "states": count,
            "worst_residual": worst,
            "tol": args.tol,
            "verdict": verdict,
        }
    else:  # mc
        if args.x0 is None or args.n0 is None:
            raise ParameterError("mc mode needs --x0 and --n0")
        x0 = validate_frequency_state(params, _parse_vector(args.x0))
        n0 = validate_dual_state(params, _parse_vector(args.n0, dtype=int))
        cfg = SdeConfig(dt=args.dt, seed=seed)
        report = mc_duality_check(
            params, x0, n0, args.t, args.replicates, oracle, cfg, seed + 1, cap=args.cap
        )
        print(f"mc duality: lhs {report.mc_lhs[0]:.6g} (se {report.mc_lhs[1]:.2g}), "
              f"rhs {report.mc_rhs[0]:.6g} (se {report.mc_rhs[1]:.2g}), "
              f"z {report.z_score:.3f}, capped {report.capped_fraction:.2%} -> {report.verdict}")
        payload = report.to_dict()
        verdict = report.verdict

    if args.out:
        import json

        _atomic_write(args.out, lambda fh: fh.write(json.dumps(payload, indent=2) + "\n"))
        print(f"report written to {args.out}")
    return EXIT_OK if verdict == "pass" else EXIT_VERIFICATION


def cmd_density_grid(args) -> int:
    params = _load_params(args.params)
    xs, ys, P = density_grid(params, args.resolution)
    _atomic_write(args.out, lambda fh: write_density_grid_csv(fh, xs, ys, P))
    print(f"wrote {P.size} grid cells to {args.out}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wfdual",
        description="Coupled Wright-Fisher diffusion, its dual jump process, and duality checks.",
    )
    parser.add_argument("--version", action="version", version=f"wfdual {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sd = sub.add_parser("simulate-diffusion", help="integrate the SDE and write a trajectory CSV")
    sd.add_argument("--params", required=True, help="JSON parameter file")
    sd.add_argument("--x0", required=True, help="comma-separated initial frequencies (length M)")
    sd.add_argument("--t", type=float, required=True, help="time horizon")
    sd.add_argument("--dt", type=float, default=1e-3)
    sd.add_argument("--scheme", choices=("euler_projected", "jump_chain"), default="euler_projected")
    sd.add_argument("--record-every", type=int, default=1, help="record every k-th step")
    sd.add_argument("--seed", type=int, default=None)
    sd.add_argument("--out", required=True)
    sd.set_defaults(func=cmd_simulate_diffusion)

    du = sub.add_parser("simulate-dual", help="simulate the dual jump process and write an event CSV")
    du.add_argument("--params", required=True)
    du.add_argument("--n0", required=True, help="comma-separated initial counts (length M)")
    du.add_argument("--t", type=float, required=True)
    du.add_argument("--seed", type=int, default=None)
    du.add_argument("--cap", type=int, default=200, help="stop when the total count exceeds this")
    du.add_argument("--k-oracle", choices=("dirichlet", "single", "two-locus", "mc"),
                    default="dirichlet", dest="k_oracle")
    du.add_argument("--out", required=True)
    du.set_defaults(func=cmd_simulate_dual)

    ke = sub.add_parser("k-eval", help="evaluate k(n) with one or more oracles")
    ke.add_argument("--params", required=True)
    ke.add_argument("--n", required=True, help="comma-separated counts (length M)")
    ke.add_argument("--method", default="auto",
                    help="comma-separated subset of dirichlet,single,two-locus,mc,auto")
    ke.add_argument("--tol", type=float, default=1e-6, help="allowed relative spread across methods")
    ke.add_argument("--mc-count", type=int, default=20000)
    ke.add_argument("--seed", type=int, default=None)
    ke.set_defaults(func=cmd_k_eval)

    ve = sub.add_parser("verify", help="run a duality verification and report pass/fail")
    ve.add_argument("--params", required=True)
    ve.add_argument("--mode", choices=("generator", "mc", "recursion"), default="generator")
    ve.add_argument("--trials", type=int, default=100)
    ve.add_argument("--max-total", type=int, default=6, help="largest total count for n")
    ve.add_argument("--tol", type=float, default=1e-6)
    ve.add_argument("--seed", type=int, default=None)
    ve.add_argument("--x0", default=None, help="mc mode: initial frequencies")
    ve.add_argument("--n0", default=None, help="mc mode: initial counts")
    ve.add_argument("--t", type=float, default=0.5, help="mc mode: horizon")
    ve.add_argument("--replicates", type=int, default=20000, help="mc mode: paths per side")
    ve.add_argument("--dt", type=float, default=1e-3, help="mc mode: SDE step")
    ve.add_argument("--cap", type=int, default=200, help="mc mode: dual growth cap")
    ve.add_argument("--inject-rate-error", type=float, default=0.0,
                    help="diagnostic: perturb k by this percentage on odd states")
    ve.add_argument("--out", default=None, help="write the JSON report here")
    ve.set_defaults(func=cmd_verify)

    dg = sub.add_parser("density-grid", help="stationary density on a midpoint grid (two-locus 2x2)")
    dg.add_argument("--params", required=True)
    dg.add_argument("--resolution", type=int, required=True)
    dg.add_argument("--out", required=True)
    dg.set_defaults(func=cmd_density_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WfdualError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
