"""Distance from the typical user to its i-th nearest helper inside its macrocell.

The Voronoi cell is replaced by its maximal inscribed disk B_max (radius X,
centred on the serving MBS at distance Y from the user). Conditioned on
X, Y and at least ``i`` helpers inside B_max, the i-th neighbour distance has
CDF ``1 - P[Poisson(lambda_d * A(r)) <= i - 1]`` where ``A(r)`` is the area
of B_max covered by the disk b(o, r): ``pi r^2`` while b(o, r) sits inside
B_max and a circle-circle lens once it crosses the boundary. Averaging over
(X, Y) splits the density into a lens term (T1) and a contained term (T2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import simpson
from scipy.special import erfcx, gammaincc, gammainccinv, gammaln

from . import kernels
from .errors import DomainError, GeometryError
from .special import DEFAULT_QUADRATURE, QuadratureSpec, integrate

__all__ = [
    "GeometryParams",
    "DistanceDistribution",
    "P_IN",
    "max_disk_radius_pdf",
    "max_disk_radius_cdf",
    "user_distance_pdf",
    "user_distance_cdf",
    "p_user_inside",
    "p_user_inside_integral",
    "p_at_least_i_inside",
    "lens_area",
    "lens_area_derivative",
    "kappa",
    "unconstrained_pdf",
    "distance_terms",
    "distance_pdf",
    "distance_distribution",
]

P_IN = 0.2

# Gauss-Legendre orders for the (y, x) double integral of the lens term
_NY_INNER = 48
_NY_OUTER = 64
_NX = 48
# exp(-5 u) envelope of the outer integral is negligible beyond u = 8
_U_MAX = 8.0
# tail probability defining the top of the cached radius grid
_GRID_TAIL = 1e-6


@dataclass(frozen=True)
class GeometryParams:
    """MBS and helper densities (nodes per unit area).

    ``omega2`` selects the lens formula: ``"theorem"`` uses
    omega_2 = x^2 + y^2 - r^2; ``"appendix"`` reproduces the dimensionally
    inconsistent x^2 + y - r^2 and exists only to check that validation
    catches it.
    """

    lambda_m: float
    lambda_d: float
    omega2: str = field(default="theorem", compare=True)

    def __post_init__(self):
        if not (self.lambda_m > 0 and self.lambda_d > 0):
            raise DomainError("densities must be strictly positive")
        if self.omega2 not in ("theorem", "appendix"):
            raise DomainError(f"unknown omega2 variant {self.omega2!r}")

    @property
    def eta(self) -> float:
        return self.lambda_d / self.lambda_m


@dataclass(frozen=True)
class DistanceDistribution:
    """f_{R_i} tabulated on a radius grid, with its two components."""

    i: int
    grid: np.ndarray
    density: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    norm_defect: float
    renormalized: bool = False

    def __post_init__(self):
        if self.grid.ndim != 1 or len(self.grid) < 2 or np.any(np.diff(self.grid) <= 0):
            raise DomainError("grid must be strictly increasing with at least two points")

    def __call__(self, r):
        """Linear interpolation of the density, zero beyond the grid."""
        return np.interp(r, self.grid, self.density, right=0.0)

    def integrate(self, values=None) -> float:
        """Integral of ``values * density`` over the grid (``values`` default 1)."""
        y = self.density if values is None else values * self.density
        return float(simpson(y, x=self.grid))

    def mean(self) -> float:
        return self.integrate(self.grid) / self.integrate()

    def t1_fraction(self) -> float:
        return float(simpson(self.t1, x=self.grid) / simpson(self.t1 + self.t2, x=self.grid))


def max_disk_radius_pdf(x, g: GeometryParams):
    """Density of the radius of the maximal disk inscribed in the cell."""
    x = np.asarray(x, dtype=float)
    lm = g.lambda_m
    out = np.where(x >= 0, 8 * lm * np.pi * x * np.exp(-4 * lm * np.pi * x * x), 0.0)
    return float(out) if out.ndim == 0 else out


def max_disk_radius_cdf(x, g: GeometryParams):
    x = np.asarray(x, dtype=float)
    out = -np.expm1(-4 * g.lambda_m * np.pi * np.maximum(x, 0.0) ** 2)
    return float(out) if out.ndim == 0 else out


def user_distance_pdf(y, g: GeometryParams):
    """Rayleigh density of the user-to-serving-MBS distance."""
    y = np.asarray(y, dtype=float)
    lm = g.lambda_m
    out = np.where(y >= 0, 2 * lm * np.pi * y * np.exp(-lm * np.pi * y * y), 0.0)
    return float(out) if out.ndim == 0 else out


def user_distance_cdf(y, g: GeometryParams):
    y = np.asarray(y, dtype=float)
    out = -np.expm1(-g.lambda_m * np.pi * np.maximum(y, 0.0) ** 2)
    return float(out) if out.ndim == 0 else out


def p_user_inside(g: GeometryParams) -> float:
    """P[X >= Y] with X and Y taken independent: exactly 1/5 for any density."""
    return P_IN


def p_user_inside_integral(g: GeometryParams, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """The same probability as int (1 - F_X(y)) f_Y(y) dy, by quadrature."""
    lm = g.lambda_m

    def f(y):
        return (1.0 - max_disk_radius_cdf(y, g)) * user_distance_pdf(y, g)

    return integrate(f, 0.0, math.inf, spec, envelope=lambda t: math.exp(-5 * lm * math.pi * t * t))


def p_at_least_i_inside(i, eta):
    """P[at least i helpers inside B_max], normalized by the inside probability."""
    if int(i) != i or i < 1:
        raise DomainError("i must be a positive integer")
    if not eta > 0:
        raise DomainError("eta must be positive")
    if math.isinf(eta):
        return 1.0 / 3.0
    return (
        5.0 * (1.0 + 4.0 / eta) ** (-i)
        + 10.0 / 3.0 * (1.0 + 6.0 / eta) ** (-i)
        - 8.0 * (1.0 + 5.0 / eta) ** (-i)
    )


def _check_regime(r, y, x, interior):
    if not (r > 0 and y > 0 and x > 0):
        raise GeometryError("lens geometry needs positive r, y, x")
    lo, hi = abs(x - y), x + y
    tol = 1e-12 * hi
    if interior:
        if not (lo + tol < r < hi - tol):
            raise GeometryError(f"r={r} not inside the partial-overlap regime ({lo}, {hi})")
    elif not (lo - tol <= r <= hi + tol):
        raise GeometryError(f"r={r} outside the partial-overlap regime [{lo}, {hi}]")


def lens_area(r, y, x) -> float:
    """Area of b(o, r) intersected with the disk of radius x centred at distance y."""
    _check_regime(r, y, x, interior=False)
    return float(kernels.lens_area(r, y, x))


def lens_area_derivative(r, y, x) -> float:
    """d(lens area)/dr = 2 r arccos((r^2 + y^2 - x^2) / (2 y r))."""
    _check_regime(r, y, x, interior=True)
    return float(kernels.lens_area_dr(r, y, x))


def _lens_appendix(r, y, x):
    # dimensionally inconsistent variant omega_2 = x^2 + y - r^2
    w1 = r * r + y * y - x * x
    w2 = x * x + y - r * r
    c1 = np.clip(w1 / (2 * y * r), -1, 1)
    c2 = np.clip(w2 / (2 * y * x), -1, 1)
    return r * r * np.arccos(c1) + x * x * np.arccos(c2) - 0.5 * np.sqrt(
        np.maximum(4 * y * y * x * x - w2 * w2, 0.0)
    )


def _lens_pair(r, y, x, variant):
    if variant == "theorem":
        return kernels.lens_area(r, y, x), kernels.lens_area_dr(r, y, x)
    h = 1e-6 * r
    return _lens_appendix(r, y, x), (_lens_appendix(r + h, y, x) - _lens_appendix(r - h, y, x)) / (2 * h)


def _kappa_piece(b, c):
    # int 2a y exp(-a y^2 - c a (y + r)^2) dy over y > 0, with b = a r^2;
    # the erfc term is folded into erfcx so the difference stays accurate
    s = c * np.sqrt(b / (1.0 + c))
    return np.exp(-c * b) * (1.0 - math.sqrt(math.pi) * s * erfcx(s)) / (1.0 + c)


def kappa(r, lambda_m):
    """Mass of (y, x) configurations in which b(o, r) lies inside B_max.

    kappa(r) = int f_Y(y) int_{y+r}^inf f_X(x) F_Y(x) dx dy, evaluated in
    closed form; kappa(0) = 1/15.
    """
    r = np.asarray(r, dtype=float)
    b = lambda_m * np.pi * r * r
    out = np.maximum(_kappa_piece(b, 4.0) - 0.8 * _kappa_piece(b, 5.0), 0.0)
    return float(out) if out.ndim == 0 else out


def unconstrained_pdf(i, r, lambda_d):
    """Density of the distance to the i-th nearest point of an HPPP."""
    if int(i) != i or i < 1:
        raise DomainError("i must be a positive integer")
    r = np.asarray(r, dtype=float)
    a = lambda_d * np.pi
    with np.errstate(divide="ignore"):
        logv = math.log(2) + i * math.log(a) - gammaln(i) + (2 * i - 1) * np.log(r) - a * r * r
    out = np.where(r > 0, np.exp(logv), 0.0 if i > 1 else 0.0)
    return float(out) if out.ndim == 0 else out


_GL = {n: leggauss(n) for n in (_NY_INNER, _NY_OUTER, _NX)}


def _unit_nodes(n):
    t, w = _GL[n]
    return 0.5 * (t + 1.0), 0.5 * w


def _lens_term_numerators(r, imax, g: GeometryParams):
    """Unnormalized T1 for orders 1..imax at radii ``r``; shape (imax, len(r))."""
    lm, ld = g.lambda_m, g.lambda_d
    r = np.asarray(r, dtype=float)
    out = np.zeros((imax, r.size))
    y_top = math.sqrt(_U_MAX / (lm * math.pi))
    tx, wx = _unit_nodes(_NX)
    theta = math.pi * tx
    shape_x = 0.5 * (1.0 - np.cos(theta))  # maps [0, 1] -> [a1, a2], sqrt ends smoothed
    jac_x = 0.5 * np.sin(theta) * math.pi * wx
    for lo_panel in (True, False):
        ty, wy = _unit_nodes(_NY_INNER if lo_panel else _NY_OUTER)
        if lo_panel:
            y = 0.5 * r[:, None] * ty[None, :]
            wyy = 0.5 * r[:, None] * wy[None, :]
            a1 = r[:, None] - y
        else:
            start = np.minimum(0.5 * r, y_top)
            y = start[:, None] + (y_top - start)[:, None] * ty[None, :]
            wyy = (y_top - start)[:, None] * wy[None, :]
            a1 = y
        a2 = r[:, None] + y
        fy = 2 * lm * math.pi * y * np.exp(-lm * math.pi * y * y)
        x = a1[..., None] + (a2 - a1)[..., None] * shape_x
        rr = np.broadcast_to(r[:, None, None], x.shape)
        yy = np.broadcast_to(y[..., None], x.shape)
        area, darea = _lens_pair(rr, yy, x, g.omega2)
        fx = 8 * lm * math.pi * x * np.exp(-4 * lm * math.pi * x * x)
        Fy = -np.expm1(-lm * math.pi * x * x)
        mu = ld * area
        base = ld * darea * np.exp(-mu) * fx * Fy
        weight = (wyy * fy)[..., None] * (a2 - a1)[..., None] * jac_x
        term = base
        for i in range(1, imax + 1):
            if i > 1:
                term = term * mu / (i - 1)
            out[i - 1] += np.sum(term * weight, axis=(1, 2))
    return out


def distance_terms(imax, r, g: GeometryParams, chunk: int = 32):
    """Normalized (T1, T2) for orders 1..imax at radii ``r``; arrays of shape (imax, len(r))."""
    if int(imax) != imax or imax < 1:
        raise DomainError("imax must be a positive integer")
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0):
        raise DomainError("radii must be nonnegative")
    t1 = np.zeros((imax, r.size))
    pos = r > 0
    idx = np.flatnonzero(pos)
    for s in range(0, idx.size, chunk):
        sl = idx[s:s + chunk]
        t1[:, sl] = _lens_term_numerators(r[sl], imax, g)
    kap = kappa(r, g.lambda_m)
    t2 = np.array([unconstrained_pdf(i, r, g.lambda_d) * kap for i in range(1, imax + 1)])
    norm = np.array([P_IN * p_at_least_i_inside(i, g.eta) for i in range(1, imax + 1)])
    return t1 / norm[:, None], t2 / norm[:, None]


def distance_pdf(i, r, g: GeometryParams, spec: QuadratureSpec = DEFAULT_QUADRATURE):
    """f_{R_i}(r) under the inscribed-disk approximation (T1 + T2)."""
    if int(i) != i or i < 1:
        raise DomainError("i must be a positive integer")
    t1, t2 = distance_terms(i, r, g)
    out = t1[i - 1] + t2[i - 1]
    return float(out[0]) if np.ndim(r) == 0 else out


def radius_grid(imax, g: GeometryParams, n: int = 400) -> np.ndarray:
    """0 followed by geometric spacing up to a radius holding all but a negligible tail.

    The top is the larger of the unconstrained 1 - 1e-6 quantile for order
    ``imax`` and the radius beyond which R_i <= X + Y <= 2X leaves a
    negligible tail.
    """
    r_free = math.sqrt(gammainccinv(imax, _GRID_TAIL) / (g.lambda_d * math.pi))
    r_cell = math.sqrt(-math.log(_GRID_TAIL * 1e-3) / (g.lambda_m * math.pi))
    top = max(r_free, min(r_cell, 50 * r_free))
    bottom = 1e-3 * math.sqrt(1.0 / (g.lambda_d * math.pi))
    return np.concatenate(([0.0], np.geomspace(min(bottom, top * 1e-3), top, n - 1)))


@lru_cache(maxsize=64)
def _tabulate(imax, g: GeometryParams, n):
    grid = radius_grid(imax, g, n)
    t1, t2 = distance_terms(imax, grid, g)
    return grid, t1, t2


def distance_distribution(
    i, g: GeometryParams, n_grid: int = 400, renormalize: bool = False, imax: int | None = None
) -> DistanceDistribution:
    """Tabulated f_{R_i}; cached per (imax, geometry, grid size).

    ``imax`` lets callers share one tabulation across orders 1..imax.
    """
    imax = max(i, imax or i)
    grid, t1, t2 = _tabulate(imax, g, n_grid)
    a, b = t1[i - 1], t2[i - 1]
    dens = a + b
    total = float(simpson(dens, x=grid))
    defect = abs(1.0 - total)
    if renormalize:
        a, b, dens = a / total, b / total, dens / total
    return DistanceDistribution(
        i=i, grid=grid, density=dens, t1=a, t2=b, norm_defect=defect, renormalized=renormalize
    )


def tail_probability_unconstrained(i, r, lambda_d):
    """P[R > r] for the unconstrained i-th neighbour distance."""
    return gammaincc(i, lambda_d * math.pi * np.asarray(r, dtype=float) ** 2)
