"""Special functions and quadrature used by every closed-form expression.

All routines work in double precision. Arbitrary precision only appears in
the test oracles.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate as _sp_integrate
from scipy import special as _sp

from .errors import ConvergenceError, DomainError, QuadratureError

__all__ = [
    "QuadratureSpec",
    "gamma_fn",
    "regularized_upper_gamma",
    "hyp2f1",
    "erfc_fn",
    "integrate",
]

# z above this switches the Gauss series to the 1-z connection formula
_SERIES_Z_MAX = 0.9
# c-a-b closer than this to an integer makes the connection formula lose
# digits to cancellation; fall back to the (slow) direct series
_NEAR_INTEGER = 1e-4


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for :func:`integrate`.

    ``tail_factor`` is the truncation policy for semi-infinite ranges: the
    upper limit is pushed out until the caller's tail envelope drops below
    ``tail_factor * abs_tol``.
    """

    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 2000
    tail_factor: float = 0.1

    def __post_init__(self):
        if not self.abs_tol > 0 or not self.rel_tol > 0:
            raise DomainError("abs_tol and rel_tol must be positive")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be >= 1")
        if not 0 < self.tail_factor <= 1:
            raise DomainError("tail_factor must lie in (0, 1]")


DEFAULT_QUADRATURE = QuadratureSpec()


def gamma_fn(a: float) -> float:
    """Complete Gamma function for positive real ``a``."""
    if not a > 0:
        raise DomainError(f"gamma_fn requires a > 0, got {a!r}")
    return math.gamma(a)


def regularized_upper_gamma(i, x):
    """Q(i, x) = Gamma(i, x)/Gamma(i) for integer ``i >= 1``.

    Equals P[Poisson(x) <= i - 1]. Accepts arrays for ``x``.
    """
    if int(i) != i or i < 1:
        raise DomainError(f"order must be a positive integer, got {i!r}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise DomainError("x must be nonnegative")
    out = _sp.gammaincc(int(i), xa)
    return float(out) if out.ndim == 0 else out


def erfc_fn(x: float) -> float:
    """Complementary error function."""
    return math.erfc(x)


def _is_nonpositive_integer(v: float) -> bool:
    return v <= 0 and v == math.floor(v)


def _series(a, b, c, z, tol=1e-16, max_terms=2_000_000):
    """Gauss series sum_n (a)_n (b)_n / ((c)_n n!) z^n for |z| < 1."""
    term = 1.0
    total = 1.0
    n = 0
    while n < max_terms:
        ratio = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        term *= ratio
        total += term
        n += 1
        if term == 0.0:
            return total
        # term ratios tend monotonically to z, so max(next ratio, |z|)
        # bounds every later ratio
        q = max(abs((a + n) * (b + n) / ((c + n) * (n + 1.0)) * z), abs(z))
        if q < 1.0 and abs(term) * q / (1.0 - q) <= tol * abs(total):
            return total
    raise ConvergenceError(
        f"2F1 series did not converge in {max_terms} terms (a={a}, b={b}, c={c}, z={z})"
    )


def _log_gamma_ratio(num, den):
    """Return (sign, log|prod Gamma(num) / prod Gamma(den)|); sign 0 at a pole of den."""
    sign = 1.0
    logv = 0.0
    for v in num:
        if _is_nonpositive_integer(v):
            raise ConvergenceError(f"Gamma pole at {v} in numerator")
        sign *= _sp.gammasgn(v)
        logv += math.lgamma(v)
    for v in den:
        if _is_nonpositive_integer(v):
            return 0.0, -math.inf
        sign *= _sp.gammasgn(v)
        logv -= math.lgamma(v)
    return sign, logv


def _connection(a, b, c, w):
    """Linear transformation z -> 1-z given ``w = 1 - z``; c-a-b not an integer."""
    s = c - a - b
    sign1, log1 = _log_gamma_ratio((c, s), (c - a, c - b))
    sign2, log2 = _log_gamma_ratio((c, -s), (a, b))
    total = 0.0
    if sign1 != 0.0:
        total += sign1 * math.exp(log1) * _series(a, b, 1.0 - s, w)
    if sign2 != 0.0:
        total += sign2 * math.exp(log2 + s * math.log(w)) * _series(c - a, c - b, 1.0 + s, w)
    return total


def _hyp2f1(a, b, c, z, w):
    # w = 1 - z, passed separately so callers near z = 1 keep its digits
    if z <= _SERIES_Z_MAX:
        return _series(a, b, c, z)
    s = c - a - b
    # for s > 0 the series converges at z = 1 itself; the connection formula
    # would cancel between two large terms there
    if s > 0.0 or abs(s - round(s)) < _NEAR_INTEGER:
        return _series(a, b, c, z)
    return _connection(a, b, c, w)


def hyp2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for real z < 1.

    Power series for 0 <= z <= 0.9, the 1-z connection formula above that,
    and the Pfaff transformation for negative z.
    """
    if _is_nonpositive_integer(c):
        raise DomainError(f"c must not be a nonpositive integer, got {c!r}")
    if not z < 1.0:
        raise DomainError(f"hyp2f1 requires z < 1, got {z!r}")
    if z == 0.0 or a == 0.0 or b == 0.0:
        return 1.0
    if z < 0.0:
        # Pfaff: (1-z)^-a 2F1(a, c-b; c; z/(z-1)), z/(z-1) in (0, 1)
        inv = 1.0 / (1.0 - z)
        return inv ** a * _hyp2f1(a, c - b, c, -z * inv, inv)
    return _hyp2f1(a, b, c, z, 1.0 - z)


def integrate(
    f: Callable[[float], float],
    lower: float,
    upper: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    envelope: Optional[Callable[[float], float]] = None,
    points=None,
) -> float:
    """Adaptive quadrature of ``f`` over ``[lower, upper]``.

    For ``upper = inf`` an ``envelope`` bounding the tail integral
    ``int_t^inf |f|`` lets the range be truncated; without one the
    infinite-range transform of QUADPACK is used. Raises
    :class:`QuadratureError` when the error estimate exceeds
    ``max(abs_tol, rel_tol * |result|)``.
    """
    tail = 0.0
    if math.isinf(upper) and envelope is not None:
        target = spec.tail_factor * spec.abs_tol
        cut = max(lower, 0.0) + 1.0
        for _ in range(200):
            if envelope(cut) < target:
                break
            cut *= 2.0
        else:
            raise QuadratureError("tail envelope never fell below tolerance", math.nan, math.inf)
        tail = envelope(cut)
        upper = cut
    kwargs = {"limit": spec.max_subdivisions, "epsabs": spec.abs_tol, "epsrel": spec.rel_tol}
    if points is not None and not math.isinf(upper):
        pts = [p for p in points if lower < p < upper]
        if pts:
            kwargs["points"] = pts
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sp_integrate.IntegrationWarning)
        value, err = _sp_integrate.quad(f, lower, upper, **kwargs)
    err += tail
    if not err <= max(spec.abs_tol, spec.rel_tol * abs(value)):
        raise QuadratureError("tolerance not met", value, err)
    return value
