"""Coverage probabilities and average rates for cellular and D2D links.

Link-level quantities (cellular coverage, D2D coverage of the i-th nearest
in-cell helper, ergodic rates) are combined with the mode probabilities of
:mod:`d2d_offload.modes` into per-content overall metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import quad_vec, simpson
from scipy.interpolate import CubicSpline

from .content import CacheParams, hit_d2d, hit_mbs
from .errors import DomainError, UndefinedConditionalError
from .geometry import GeometryParams, distance_distribution
from .modes import (
    SelectionScheme,
    interferer_presence_prob,
    p_d2d_bound,
    p_d2d_mode,
    p_d2d_mode_all_contents,
    p_served_by_ith,
)
from .special import DEFAULT_QUADRATURE, QuadratureSpec, hyp2f1, integrate

__all__ = [
    "NetworkParams",
    "MetricResult",
    "delta_m",
    "coverage_cellular",
    "interference_exponent",
    "delta_d",
    "d2d_link_coverage",
    "coverage_d2d_ith",
    "coverage_d2d_mode",
    "coverage_overall",
    "ergodic_rate_link",
    "bandwidth_share",
    "user_loads",
    "avg_rate_d2d",
    "avg_rate_cellular",
    "avg_rate_overall",
    "baseline_rates",
    "optimal_k",
    "coverage_gain",
]

K_MAX = 10
# orders tabulated together so every k <= K_MAX shares one distance grid
_IMAX = K_MAX
# log-spaced table range for the interference shape functions
_T_LO, _T_HI, _T_N = 1e-5, 1e4, 361
# the unaveraged Laplace transform is below 1e-60 past this t
_L_HI = 10.0


@dataclass(frozen=True)
class NetworkParams:
    """Radio parameters in linear SI units (W, Hz, nodes/m^2)."""

    lambda_m: float
    lambda_d: float
    lambda_u: float
    P_m: float
    P_d: float
    W_m: float
    W_d: float
    alpha: float
    tau_m: float
    tau_d: float
    sigma2: float
    beta: float

    def __post_init__(self):
        for name in ("lambda_m", "lambda_d", "lambda_u", "P_m", "P_d", "W_m", "W_d", "tau_m", "tau_d", "beta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.sigma2 >= 0:
            raise DomainError("sigma2 must be nonnegative")
        if not 2 < self.alpha <= 5:
            raise DomainError("alpha must lie in (2, 5]")
        if self.beta > 1:
            raise DomainError("beta must not exceed 1")

    @property
    def eta(self) -> float:
        return self.lambda_d / self.lambda_m

    @property
    def eta_u(self) -> float:
        return self.lambda_u / self.lambda_m

    @property
    def p_int(self) -> float:
        return interferer_presence_prob(self.eta)

    @property
    def lambda_int(self) -> float:
        """Density of the thinned active-interferer process."""
        return self.p_int * self.lambda_m

    def geometry(self) -> GeometryParams:
        return GeometryParams(self.lambda_m, self.lambda_d)

    def with_tau(self, tau_m=None, tau_d=None) -> "NetworkParams":
        return replace(
            self,
            tau_m=self.tau_m if tau_m is None else tau_m,
            tau_d=self.tau_d if tau_d is None else tau_d,
        )


@dataclass(frozen=True)
class MetricResult:
    value: float
    components: dict = field(default_factory=dict)
    method: str = "exact"


def _geom(n: NetworkParams, g):
    return n.geometry() if g is None else g


# ---------------------------------------------------------------- cellular


def _folded(f_head, f_tail, lo, spec, points=()):
    # int_lo^1 f_head(u) du + int_0^1 f_tail(v) dv, the tail being u > 1 under u = 1/v
    rel = QuadratureSpec(abs_tol=1e-300, rel_tol=spec.rel_tol, max_subdivisions=spec.max_subdivisions)
    head = integrate(f_head, lo, 1.0, rel, points=[p for p in points if p > 1]) if lo < 1 else 0.0
    tail_lo = max(0.0, 1.0 / lo) if lo > 1 else 0.0
    tail = integrate(f_tail, 0.0, min(1.0, tail_lo) if lo > 1 else 1.0, rel,
                     points=[1.0 / p for p in points if p > 1])
    return head + tail


def delta_m(tau, alpha, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """tau^(2/alpha) * int_{tau^(-2/alpha)}^inf du / (1 + u^(alpha/2))."""
    if not tau >= 0:
        raise DomainError("tau must be nonnegative")
    if tau == 0:
        return 0.0
    a = tau ** (-2.0 / alpha)
    h = alpha / 2.0
    val = _folded(lambda u: 1.0 / (1.0 + u ** h), lambda v: v ** (h - 2) / (1.0 + v ** h), a, spec)
    return tau ** (2.0 / alpha) * val


def _cellular_at(tau, n: NetworkParams, spec):
    if tau == 0:
        return 1.0
    lm = n.lambda_m
    k = math.pi * lm * (1.0 + delta_m(tau, n.alpha, spec))
    noise = tau * n.sigma2 / n.P_m
    half = n.alpha / 2.0
    if noise == 0:
        return math.pi * lm / k
    f = lambda v: math.exp(-k * v - noise * v ** half)  # noqa: E731
    v = integrate(f, 0.0, math.inf, spec, envelope=lambda t: math.exp(-k * t) / k)
    return math.pi * lm * v


def coverage_cellular(n: NetworkParams, spec: QuadratureSpec = DEFAULT_QUADRATURE, tau=None) -> float:
    """Downlink SINR coverage of the nearest-MBS link (Rayleigh fading)."""
    return _cellular_at(n.tau_m if tau is None else tau, n, spec)


# ---------------------------------------------------------------- D2D interference


def _shape_tail(alpha):
    # int_0^inf w / (1 + w^alpha) dw
    return math.pi / (alpha * math.sin(2 * math.pi / alpha))


def _J(z, alpha):
    """int_z^inf w / (1 + w^alpha) dw through its hypergeometric form."""
    if z <= 0:
        return _shape_tail(alpha)
    if z < 1:
        head = 0.5 * z * z * hyp2f1(1.0, 2.0 / alpha, 1.0 + 2.0 / alpha, -(z ** alpha))
        return _shape_tail(alpha) - head
    ab = 1.0 - 2.0 / alpha
    return z ** (2 - alpha) / (alpha - 2) * hyp2f1(1.0, ab, 1.0 + ab, -(z ** -alpha))


def _H_direct(t, alpha):
    # E_U[J(sqrt(U)/t)] = int w/(1+w^alpha) (1 - exp(-t^2 w^2)) dw
    spec = QuadratureSpec(rel_tol=1e-11)
    return _folded(
        lambda w: w / (1 + w ** alpha) * -math.expm1(-t * t * w * w),
        lambda v: v ** (alpha - 3) / (1 + v ** alpha) * -math.expm1(-t * t / (v * v)) if v > 0 else 0.0,
        0.0,
        spec,
        points=(1.0 / t,),
    )


def _L_direct(t, alpha):
    # E_U[exp(-2 t^2 J(sqrt(U)/t))] with U = v^2 to smooth the origin
    spec = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10)
    f = lambda v: 2 * v * math.exp(-v * v - 2 * t * t * _J(v / t, alpha))  # noqa: E731
    return integrate(f, 0.0, 40.0, spec, points=[min(t, 39.0)])


@lru_cache(maxsize=16)
def _shape_tables(alpha):
    ts = np.geomspace(_T_LO, _T_HI, _T_N)
    h = np.array([_H_direct(t, alpha) for t in ts])
    return ts, CubicSpline(np.log(ts), np.log(h))


@lru_cache(maxsize=16)
def _laplace_table(alpha):
    ts = np.geomspace(_T_LO, _L_HI, 241)
    vals = np.array([_L_direct(t, alpha) for t in ts])
    return CubicSpline(np.log(ts), np.log(vals))


def _H(t, alpha):
    t = np.asarray(t, dtype=float)
    ts, spl = _shape_tables(alpha)
    out = np.empty_like(t)
    mid = (t >= _T_LO) & (t <= _T_HI)
    out[mid] = np.exp(spl(np.log(t[mid])))
    hi = t > _T_HI
    out[hi] = _shape_tail(alpha) - 0.5 / t[hi] ** 2
    lo = (t < _T_LO) & (t > 0)
    out[lo] = [_H_direct(v, alpha) for v in t[lo]]
    out[t <= 0] = 0.0
    return out


def interference_exponent(s, lambda_int, alpha):
    """E_Q[int_Q^inf nu / (1 + nu^alpha / s) dnu] with Q the nearest active interferer.

    Equals ``s * delta_d(s) / (alpha - 2)``; evaluated through a tabulated
    shape function of t = sqrt(lambda_int * pi) * s^(1/alpha).
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("s must be nonnegative")
    t = math.sqrt(lambda_int * math.pi) * s ** (1.0 / alpha)
    out = s ** (2.0 / alpha) * _H(t, alpha)
    return float(out) if out.ndim == 0 else out


def delta_d(s, alpha, lambda_int, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """E_Q[q^(2-alpha) 2F1(1, abar; 1+abar; -s q^-alpha)] by quadrature against f_Q.

    Reference path for :func:`interference_exponent`; slow.
    """
    if not s > 0:
        raise DomainError("s must be positive")
    ab = 1.0 - 2.0 / alpha
    a = lambda_int * math.pi

    def f(q):
        if q == 0:
            return 0.0
        return 2 * a * q * math.exp(-a * q * q) * q ** (2 - alpha) * hyp2f1(1.0, ab, 1.0 + ab, -s * q ** -alpha)

    scale = 1.0 / math.sqrt(a)
    env = lambda t: math.exp(-a * t * t) * s / t ** 2  # noqa: E731
    # the value scales with s, so only a relative tolerance is meaningful
    rel = QuadratureSpec(abs_tol=1e-300, rel_tol=spec.rel_tol, max_subdivisions=spec.max_subdivisions)
    return integrate(f, 0.0, math.inf, rel, envelope=env, points=[s ** (1.0 / alpha), scale])


def _laplace_exact(s, lambda_int, alpha):
    s = np.asarray(s, dtype=float)
    t = math.sqrt(lambda_int * math.pi) * s ** (1.0 / alpha)
    spl = _laplace_table(alpha)
    out = np.empty_like(t)
    mid = (t >= _T_LO) & (t <= _L_HI)
    out[mid] = np.exp(spl(np.log(t[mid])))
    # outside the table both forms agree to far below double precision of 1
    rest = ~mid
    out[rest] = np.exp(-2 * t[rest] ** 2 * _H(t[rest], alpha))
    return out


# ---------------------------------------------------------------- D2D coverage


def _distance_tables(g: GeometryParams, imax: int):
    dists = [distance_distribution(i, g, imax=imax) for i in range(1, imax + 1)]
    grid = dists[0].grid
    dens = np.array([d.density for d in dists])
    return grid, dens


def _d2d_cov_matrix(taus, n: NetworkParams, g: GeometryParams, imax: int, laplace: str):
    """Gamma_{d,i}(tau) for each tau in ``taus`` (rows) and i = 1..imax (columns)."""
    grid, dens = _distance_tables(g, imax)
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    ra = grid ** n.alpha
    out = np.empty((taus.size, imax))
    for j, tau in enumerate(taus):
        s = tau * ra
        if laplace == "jensen":
            lap = np.exp(-2 * math.pi * n.lambda_int * interference_exponent(s, n.lambda_int, n.alpha))
        elif laplace == "exact":
            lap = _laplace_exact(s, n.lambda_int, n.alpha)
        else:
            raise DomainError(f"unknown laplace variant {laplace!r}")
        kern = lap * np.exp(-s * n.sigma2 / n.P_d)
        out[j] = simpson(dens * kern, x=grid, axis=1)
    return out


def d2d_link_coverage(n: NetworkParams, g: GeometryParams | None = None, imax: int = _IMAX, tau=None,
                      laplace: str = "jensen") -> np.ndarray:
    """Gamma_{d,i} for i = 1..imax at threshold ``tau`` (default ``n.tau_d``)."""
    g = _geom(n, g)
    tau = n.tau_d if tau is None else tau
    return _cached_d2d(n.with_tau(tau_d=tau), g, max(imax, _IMAX), laplace)[:imax].copy()


@lru_cache(maxsize=256)
def _cached_d2d(n, g, imax, laplace):
    return _d2d_cov_matrix([n.tau_d], n, g, imax, laplace)[0]


def coverage_d2d_ith(i, n: NetworkParams, g: GeometryParams | None = None,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE, tau=None, laplace: str = "jensen") -> float:
    """Coverage when served by the i-th nearest in-cell helper."""
    if int(i) != i or i < 1:
        raise DomainError("i must be a positive integer")
    return float(d2d_link_coverage(n, g, imax=max(i, _IMAX), tau=tau, laplace=laplace)[i - 1])


def _weights(scheme, c, k, n, cache):
    return np.array([p_served_by_ith(scheme, i, c, k, n.eta, cache) for i in range(1, k + 1)])


def coverage_d2d_mode(scheme, c, k, n: NetworkParams, g=None, cache: CacheParams = None,
                      spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Coverage conditioned on D2D mode: helper-order mixture of Gamma_{d,i}."""
    w = _weights(scheme, c, k, n, cache)
    total = w.sum()
    if total <= 0:
        raise UndefinedConditionalError(f"D2D mode has zero probability for content {c}")
    cov = d2d_link_coverage(n, g, imax=max(k, _IMAX))[:k]
    return float(np.dot(w, cov) / total)


def coverage_overall(scheme, c, k, n: NetworkParams, g=None, cache: CacheParams = None,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE, method: str = "exact") -> MetricResult:
    """Mode-weighted coverage; ``method="bound"`` uses the large-eta mode probabilities."""
    scheme = SelectionScheme.parse(scheme)
    gm = coverage_cellular(n, spec)
    cov = d2d_link_coverage(n, g, imax=max(k, _IMAX))[:k]
    if method == "exact":
        w = _weights(scheme, c, k, n, cache)
    elif method == "bound":
        w = np.array([p_d2d_bound(scheme, i, c, k, cache) for i in range(1, k + 1)])
    else:
        raise DomainError(f"unknown method {method!r}")
    p_d = float(w.sum())
    # the bound form weights Gamma_m by the probability that none of the k helpers has c
    p_cell = 1.0 - p_d
    if method == "bound" and scheme is SelectionScheme.US:
        p_cell = 1.0 - hit_d2d(c, cache)
    terms = w * cov
    value = p_cell * gm + float(terms.sum())
    comps = {"cellular": p_cell * gm, "p_d2d": p_d, "gamma_m": gm}
    comps.update({f"d2d_{i}": float(t) for i, t in enumerate(terms, start=1)})
    return MetricResult(value=value, components=comps, method=method)


# ---------------------------------------------------------------- rates


def _rate_integral(fn):
    # (1/ln 2) int_0^inf P[SINR > t] / (1 + t) dt, with t = e^x
    def integrand(x):
        t = math.exp(x)
        return fn(t) * t / (1.0 + t)

    val, err = quad_vec(integrand, -40.0, 60.0, epsabs=1e-10, epsrel=1e-8, limit=400)
    return np.asarray(val) / math.log(2.0)


@lru_cache(maxsize=64)
def _rates_cached(n: NetworkParams, g: GeometryParams, imax: int):
    d2d = _rate_integral(lambda t: _d2d_cov_matrix([t], n, g, imax, "jensen")[0])
    cell = float(_rate_integral(lambda t: np.array([_cellular_at(t, n, DEFAULT_QUADRATURE)]))[0])
    return cell, d2d


def ergodic_rate_link(kind, n: NetworkParams, g=None, spec: QuadratureSpec = DEFAULT_QUADRATURE, i: int = 1):
    """E[log2(1 + SINR)] in bits/s/Hz for ``kind`` "cellular" or "d2d" (order ``i``)."""
    cell, d2d = _rates_cached(n, _geom(n, g), max(i, _IMAX))
    if kind == "cellular":
        return cell
    if kind == "d2d":
        if int(i) != i or i < 1:
            raise DomainError("i must be a positive integer")
        return float(d2d[i - 1])
    raise DomainError(f"unknown link kind {kind!r}")


def bandwidth_share(a):
    """gamma(a) = (1 - exp(-a)) / a, the mean share of a band split Poisson(a) + 1 ways."""
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise DomainError("load must be nonnegative")
    safe = np.where(a > 0, a, 1.0)
    out = np.where(a > 1e-12, -np.expm1(-safe) / safe, 1.0 - a / 2)
    return float(out) if out.ndim == 0 else out


def user_loads(scheme, k, n: NetworkParams, cache: CacheParams):
    """(eta_u_d, eta_u_m): mean users per cell in D2D and cellular mode."""
    p = p_d2d_mode_all_contents(scheme, k, n.eta, cache)
    share = float(np.dot(cache.popularities, p))
    return n.eta_u * share, n.eta_u * (1.0 - share)


def avg_rate_d2d(scheme, c, k, n: NetworkParams, g=None, cache: CacheParams = None,
                 spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    w = _weights(scheme, c, k, n, cache)
    total = w.sum()
    if total <= 0:
        raise UndefinedConditionalError(f"D2D mode has zero probability for content {c}")
    _, d2d = _rates_cached(n, _geom(n, g), max(k, _IMAX))
    eta_d, _ = user_loads(scheme, k, n, cache)
    return n.W_d * bandwidth_share(eta_d) * float(np.dot(w, d2d[:k]) / total)


def _rhat(c, n, g, cache):
    cell, _ = _rates_cached(n, _geom(n, g), _IMAX)
    return cell * (1.0 if hit_mbs(c, cache) else n.beta)


def avg_rate_cellular(scheme, c, k, n: NetworkParams, g=None, cache: CacheParams = None,
                      spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    _, eta_m = user_loads(scheme, k, n, cache)
    return n.W_m * _rhat(c, n, g, cache) * bandwidth_share(eta_m)


def avg_rate_overall(scheme, c, k, n: NetworkParams, g=None, cache: CacheParams = None,
                     spec: QuadratureSpec = DEFAULT_QUADRATURE, method: str = "exact") -> MetricResult:
    """Mode-weighted average rate in bps."""
    scheme = SelectionScheme.parse(scheme)
    g = _geom(n, g)
    eta_d, eta_m = user_loads(scheme, k, n, cache)
    _, d2d = _rates_cached(n, g, max(k, _IMAX))
    rm = n.W_m * _rhat(c, n, g, cache) * bandwidth_share(eta_m)
    if method == "exact":
        w = _weights(scheme, c, k, n, cache)
        p_cell = 1.0 - float(w.sum())
    elif method == "bound":
        w = np.array([p_d2d_bound(scheme, i, c, k, cache) for i in range(1, k + 1)])
        miss = 1.0 - hit_d2d(c, cache)
        p_cell = miss if scheme is SelectionScheme.US else miss ** k
    else:
        raise DomainError(f"unknown method {method!r}")
    terms = n.W_d * bandwidth_share(eta_d) * w * d2d[:k]
    value = p_cell * rm + float(terms.sum())
    comps = {"cellular": p_cell * rm, "p_d2d": float(w.sum()), "eta_u_d": eta_d, "eta_u_m": eta_m}
    comps.update({f"d2d_{i}": float(t) for i, t in enumerate(terms, start=1)})
    return MetricResult(value=value, components=comps, method=method)


def baseline_rates(n: NetworkParams, g=None):
    """(T_ca, T_bh): cellular-only rates with and without an MBS cache hit."""
    cell, _ = _rates_cached(n, _geom(n, g), _IMAX)
    t_ca = (n.W_m + n.W_d) * bandwidth_share(n.eta_u) * cell
    return t_ca, n.beta * t_ca


# ---------------------------------------------------------------- optimization


def optimal_k(metric, scheme, c, n: NetworkParams, cache: CacheParams, g=None, k_max: int = K_MAX,
              method: str = "exact"):
    """(k*, values) maximizing ``metric`` ("coverage" or "rate") over k = 1..k_max."""
    if k_max < 1:
        raise DomainError("k_max must be >= 1")
    fn = {"coverage": coverage_overall, "rate": avg_rate_overall}.get(metric)
    if fn is None:
        raise DomainError(f"unknown metric {metric!r}")
    vals = np.array([fn(scheme, c, k, n, g, cache, method=method).value for k in range(1, k_max + 1)])
    return int(np.argmax(vals)) + 1, vals


def coverage_gain(c, n: NetworkParams, g=None, cache: CacheParams = None,
                  spec: QuadratureSpec = DEFAULT_QUADRATURE, k_max: int = K_MAX) -> dict:
    """Percentage coverage gain over cellular-only at the best k, per scheme."""
    gm = coverage_cellular(n, spec)
    out = {}
    for scheme in SelectionScheme:
        _, vals = optimal_k("coverage", scheme, c, n, cache, g, k_max)
        out[scheme.value] = (vals.max() - gm) / gm * 100.0
    return out
