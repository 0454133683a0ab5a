"""Helper-selection probabilities under nearest (NS) and uniform (US) selection.

The number of helpers N in the requesting user's cell is modelled with the
gamma (shape 3.5) approximation of the Poisson-Voronoi cell area, giving a
negative-binomial PMF in the density ratio ``eta = lambda_d / lambda_m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .content import CacheParams, hit_d2d
from .errors import DomainError
from .special import hyp2f1

__all__ = [
    "SelectionScheme",
    "ModeProfile",
    "cell_helper_count_pmf",
    "helper_count_sf",
    "helper_count_sf_closed",
    "p_served_by_ith",
    "p_d2d_mode",
    "p_d2d_bound",
    "p_d2d_mode_all_contents",
    "mode_profile",
    "interferer_presence_prob",
]

SHAPE = 3.5
TAIL_MASS = 1e-12


class SelectionScheme(str, Enum):
    NS = "NS"
    US = "US"

    @classmethod
    def parse(cls, value) -> "SelectionScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise DomainError(f"unknown selection scheme {value!r}") from None


@dataclass(frozen=True)
class ModeProfile:
    k: int
    per_helper: tuple
    d2d_total: float
    cellular: float


def _check_eta(eta):
    if not eta > 0 or math.isinf(eta):
        raise DomainError(f"eta_d must be positive and finite, got {eta!r}")


def _check_order(i, k):
    if int(i) != i or i < 1:
        raise DomainError(f"helper order must be a positive integer, got {i!r}")
    if int(k) != k or k < 1:
        raise DomainError(f"k must be a positive integer, got {k!r}")
    if i > k:
        raise IndexError(f"helper order {i} exceeds k={k}")


def _log_pmf(j, eta):
    j = np.asarray(j, dtype=float)
    return (
        SHAPE * math.log(SHAPE)
        + gammaln(j + SHAPE)
        + j * math.log(eta)
        - gammaln(SHAPE)
        - gammaln(j + 1.0)
        - (j + SHAPE) * math.log(eta + SHAPE)
    )


def cell_helper_count_pmf(j, eta):
    """P[N = j] for the helper count in the user's cell."""
    _check_eta(eta)
    ja = np.asarray(j)
    if np.any(ja < 0) or np.any(ja != np.floor(ja)):
        raise DomainError("helper count must be a nonnegative integer")
    out = np.exp(_log_pmf(ja, eta))
    return float(out) if out.ndim == 0 else out


def _tail_terms(i, eta):
    """PMF values from j = i until the remaining mass is below TAIL_MASS."""
    z = eta / (eta + SHAPE)
    chunk = 256
    start = i
    pieces = []
    while True:
        js = np.arange(start, start + chunk)
        vals = np.exp(_log_pmf(js, eta))
        pieces.append(vals)
        last = js[-1]
        q = max((last + 1 + SHAPE) / (last + 2) * z, z)
        if q < 1 and vals[-1] * q / (1 - q) < TAIL_MASS:
            return np.concatenate(pieces)
        start += chunk
        chunk *= 2


def helper_count_sf(i, eta):
    """P[N >= i] by direct summation of the PMF tail (reference path)."""
    _check_eta(eta)
    if int(i) != i or i < 0:
        raise DomainError("i must be a nonnegative integer")
    if i == 0:
        return 1.0
    return float(math.fsum(_tail_terms(int(i), eta)))


def helper_count_sf_closed(i, eta):
    """P[N >= i] = P[N = i] * 2F1(1, i + 3.5; i + 1; eta / (eta + 3.5))."""
    _check_eta(eta)
    if i == 0:
        return 1.0
    return cell_helper_count_pmf(i, eta) * hyp2f1(1.0, i + SHAPE, i + 1.0, eta / (eta + SHAPE))


def interferer_presence_prob(eta):
    """P[N >= 1] = 1 - (1 + eta/3.5)^-3.5, the chance a cell has a helper."""
    _check_eta(eta)
    return -math.expm1(-SHAPE * math.log1p(eta / SHAPE))


def _us_weight(i, k, eta):
    # P[N > k]/k + sum_{m=i}^{k} P[N = m]/m : chance the i-th helper is drawn
    tail = helper_count_sf(k + 1, eta) / k
    m = np.arange(i, k + 1)
    return tail + float(np.sum(cell_helper_count_pmf(m, eta) / m))


def p_served_by_ith(scheme, i, c, k, eta, cache: CacheParams, method="tail"):
    """Probability the user is served by its i-th nearest in-cell helper.

    ``method="closed"`` evaluates the hypergeometric closed forms instead of
    the PMF tail sums; both must agree.
    """
    scheme = SelectionScheme.parse(scheme)
    _check_order(i, k)
    _check_eta(eta)
    h = hit_d2d(c, cache)
    if scheme is SelectionScheme.NS:
        sf = helper_count_sf_closed(i, eta) if method == "closed" else helper_count_sf(i, eta)
        return sf * (1.0 - h) ** (i - 1) * h
    if method == "closed":
        first = helper_count_sf_closed(k + 1, eta) / k
        m = np.arange(i, k + 1)
        return h * (first + float(np.sum(cell_helper_count_pmf(m, eta) / m)))
    return h * _us_weight(i, k, eta)


def mode_profile(scheme, c, k, eta, cache: CacheParams) -> ModeProfile:
    per = tuple(p_served_by_ith(scheme, i, c, k, eta, cache) for i in range(1, k + 1))
    total = math.fsum(per)
    return ModeProfile(k=k, per_helper=per, d2d_total=total, cellular=1.0 - total)


def p_d2d_mode(scheme, c, k, eta, cache: CacheParams):
    """Probability of D2D mode. For US this is independent of ``k``."""
    scheme = SelectionScheme.parse(scheme)
    _check_order(1, k)
    _check_eta(eta)
    if scheme is SelectionScheme.US:
        return hit_d2d(c, cache) * interferer_presence_prob(eta)
    return mode_profile(scheme, c, k, eta, cache).d2d_total


def p_d2d_mode_all_contents(scheme, k, eta, cache: CacheParams) -> np.ndarray:
    """D2D mode probability for every content 1..L (vectorized over contents)."""
    scheme = SelectionScheme.parse(scheme)
    h = cache.d2d_hit_rates
    if scheme is SelectionScheme.US:
        return h * interferer_presence_prob(eta)
    out = np.zeros_like(h)
    miss = np.ones_like(h)
    for i in range(1, k + 1):
        out += helper_count_sf(i, eta) * miss * h
        miss = miss * (1.0 - h)
    return out


def p_d2d_bound(scheme, i, c, k, cache: CacheParams):
    """Upper bound on the per-helper probability, attained as eta -> infinity."""
    scheme = SelectionScheme.parse(scheme)
    _check_order(i, k)
    h = hit_d2d(c, cache)
    if scheme is SelectionScheme.NS:
        return (1.0 - h) ** (i - 1) * h
    return h / k
