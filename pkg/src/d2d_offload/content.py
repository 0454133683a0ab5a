"""Zipf content popularity and the MBS / helper cache hit rates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError

__all__ = ["CacheParams", "popularity", "hit_mbs", "hit_d2d"]

# rho is summed term by term; refuse libraries large enough to make that slow
MAX_LIBRARY = 10_000_000


@dataclass(frozen=True)
class CacheParams:
    """Library size, Zipf skewness and cache sizes.

    ``rho`` is derived from ``L`` and ``zeta`` at construction.
    """

    L: int
    zeta: float
    C_m: int
    C_d: int
    rho: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.L) != self.L or not 1 <= self.L <= MAX_LIBRARY:
            raise DomainError(f"library size must be an integer in [1, {MAX_LIBRARY}]")
        if not self.zeta >= 0:
            raise DomainError("zeta must be nonnegative")
        if int(self.C_m) != self.C_m or not 1 <= self.C_m <= self.L:
            raise DomainError("C_m must be an integer in [1, L]")
        if int(self.C_d) != self.C_d or self.C_d < 0:
            raise DomainError("C_d must be a nonnegative integer")
        weights = np.arange(1, self.L + 1, dtype=float) ** (-self.zeta)
        object.__setattr__(self, "rho", 1.0 / math.fsum(weights))

    @cached_property
    def popularities(self) -> np.ndarray:
        """pop(c) for c = 1..L as an array (index 0 is content 1)."""
        return self.rho * np.arange(1, self.L + 1, dtype=float) ** (-self.zeta)

    @cached_property
    def d2d_hit_rates(self) -> np.ndarray:
        """h_d(c) for c = 1..L."""
        return _hit_from_pop(self.popularities, self.C_d)


def _check_index(c, p: CacheParams):
    ca = np.asarray(c)
    if ca.dtype.kind not in "iu" and not np.all(ca == np.floor(ca)):
        raise DomainError("content index must be an integer")
    if np.any(ca < 1) or np.any(ca > p.L):
        raise IndexError(f"content index outside [1, {p.L}]")
    return ca


def _hit_from_pop(pop, slots):
    if slots == 0:
        return np.zeros_like(pop)
    # 1 - (1 - pop)^C_d without cancellation for small pop
    with np.errstate(divide="ignore"):
        return -np.expm1(slots * np.log1p(-pop))


def _scalar(v):
    return float(v) if np.ndim(v) == 0 else v


def popularity(c, p: CacheParams):
    """Zipf request probability rho * c^-zeta."""
    ca = _check_index(c, p)
    return _scalar(p.rho * ca.astype(float) ** (-p.zeta))


def hit_mbs(c, p: CacheParams):
    """1 when content ``c`` is among the C_m most popular files (LFU placement)."""
    ca = _check_index(c, p)
    out = (ca <= p.C_m).astype(int)
    return int(out) if out.ndim == 0 else out


def hit_d2d(c, p: CacheParams):
    """Probability that a helper whose C_d slots are filled i.i.d. by popularity holds ``c``."""
    pop = np.asarray(popularity(c, p), dtype=float)
    return _scalar(_hit_from_pop(pop, p.C_d))
