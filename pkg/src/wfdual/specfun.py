"""Scalar special functions: log-Gamma, Beta, and Kummer's function 1F1.

Everything here is real-valued and restricted to the parameter ranges the
rest of the package actually needs (positive Beta/Gamma arguments, moderate
|z| for 1F1).  All Beta/Gamma arithmetic is done in log space so that
downstream moment ratios for large sample sizes never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConvergenceError, NumericError, ParameterError

__all__ = [
    "SeriesControl",
    "log_gamma",
    "log_beta",
    "beta",
    "log_rising",
    "kummer_1f1",
    "log_kummer_1f1",
]


@dataclass(frozen=True)
class SeriesControl:
    """Truncation controls for series evaluation."""

    rel_tol: float = 1e-14
    max_terms: int = 10000

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ParameterError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_terms < 1:
            raise ParameterError(f"max_terms must be >= 1, got {self.max_terms}")


DEFAULT_CONTROL = SeriesControl()


def log_gamma(a: float) -> float:
    """ln Gamma(a) for a > 0."""
    if not a > 0:
        raise ParameterError(f"log_gamma requires a > 0, got {a}")
    return math.lgamma(a)


def log_beta(a: float, b: float) -> float:
    """ln B(a, b) for a, b > 0."""
    if not (a > 0 and b > 0):
        raise ParameterError(f"log_beta requires positive arguments, got ({a}, {b})")
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def beta(a: float, b: float) -> float:
    """B(a, b) = Gamma(a)Gamma(b)/Gamma(a+b), computed via logs."""
    return math.exp(log_beta(a, b))


def log_rising(a: float, m: int) -> float:
    """ln of the rising factorial a(a+1)...(a+m-1); 0 for m = 0."""
    if m == 0:
        return 0.0
    if not a > 0:
        raise ParameterError(f"log_rising requires a > 0, got {a}")
    return math.lgamma(a + m) - math.lgamma(a)


def _is_nonpositive_integer(b: float) -> bool:
    return b <= 0 and b == math.floor(b)


def _kummer_series(a: float, b: float, z: float, ctrl: SeriesControl) -> float:
    # Plain Taylor series; callers arrange z >= 0 so all terms share one sign
    # pattern and no catastrophic cancellation occurs.
    term = 1.0
    total = 1.0
    for n in range(1, ctrl.max_terms + 1):
        term *= (a + n - 1) * z / ((b + n - 1) * n)
        total += term
        if abs(term) <= ctrl.rel_tol * abs(total):
            return total
    raise ConvergenceError(
        f"1F1({a}, {b}, {z}) did not converge in {ctrl.max_terms} terms",
        partial=total,
        terms=ctrl.max_terms,
    )


def kummer_1f1(a: float, b: float, z: float, ctrl: SeriesControl | None = None) -> float:
    """Confluent hypergeometric function 1F1(a; b; z).

    For z < 0 the Kummer transformation 1F1(a,b,z) = e^z 1F1(b-a,b,-z) is
    applied first, so the series actually summed always has argument >= 0.
    """
    if ctrl is None:
        ctrl = DEFAULT_CONTROL
    if _is_nonpositive_integer(b):
        raise ParameterError(f"1F1 undefined for nonpositive integer b = {b}")
    if z == 0.0:
        return 1.0
    if z < 0:
        return math.exp(z) * _kummer_series(b - a, b, -z, ctrl)
    return _kummer_series(a, b, z, ctrl)


def log_kummer_1f1(a: float, b: float, z: float, ctrl: SeriesControl | None = None) -> float:
    """ln 1F1(a; b; z) for parameter ranges where the value is positive.

    Positivity holds whenever the transformed series has nonnegative terms,
    in particular for a, b > 0 (and, after transformation, b > a when z < 0,
    which is automatic for b - a > 0; the oracles only call it there).
    """
    if ctrl is None:
        ctrl = DEFAULT_CONTROL
    if _is_nonpositive_integer(b):
        raise ParameterError(f"1F1 undefined for nonpositive integer b = {b}")
    if z == 0.0:
        return 0.0
    if z < 0:
        value = _kummer_series(b - a, b, -z, ctrl)
        shift = z
    else:
        value = _kummer_series(a, b, z, ctrl)
        shift = 0.0
    if not value > 0:
        raise NumericError(f"1F1({a}, {b}, {z}) evaluated nonpositive ({value}); log undefined")
    return shift + math.log(value)
