"""Monte Carlo simulator of the cache-enabled network, used as the reference for
every analytic quantity.

Each realization drops MBSs and helpers as independent HPPPs over a window
around the origin, associates the user at the origin with its nearest MBS and
every helper with the MBS whose Voronoi cell contains it. Trials are grouped
into fixed-size blocks; block ``b`` draws from a Philox stream whose counter
starts at ``b * 2**128``, so results depend only on the seed and never on the
number of worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .content import CacheParams, hit_d2d, hit_mbs
from .errors import ConfigError, DomainError, InsufficientSamplesError
from .modes import SelectionScheme
from .performance import NetworkParams, user_loads

__all__ = [
    "SimConfig",
    "TrialOutcome",
    "Estimate",
    "DistanceHistogram",
    "US_VARIANTS",
    "OBSERVABLES",
    "block_rng",
    "run_trial",
    "estimate",
    "mode_probabilities",
    "helper_count_samples",
    "d2d_sinr_samples",
    "cellular_sinr_samples",
    "distance_samples",
    "conditional_distance_histogram",
    "histogram_l1",
]

US_VARIANTS = ("us_select_then_check", "us_check_then_select")
OBSERVABLES = (
    "p-in",
    "mode",
    "helper-count",
    "coverage-cellular",
    "coverage-d2d",
    "coverage",
    "rate-cellular",
    "rate-d2d",
    "rate",
)
EDGE_POLICIES = ("oversized_window", "toroidal")
MIN_TRIALS = 100
Z95 = 1.959963984540054
# ordered-PPP interferers kept in the cellular fast path (mean count)
_CELL_TERMS = 1000


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    The window is a disk of radius ``window_factor / sqrt(lambda_m)``
    (a square of that half-width under the toroidal policy).
    """

    trials: int = 100_000
    seed: int = 0
    window_factor: float = 5.0
    edge_policy: str = "oversized_window"
    block_size: int = 256
    workers: int = 1
    us_variant: str = "us_select_then_check"
    record: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if self.window_factor < 3:
            raise ConfigError("window_factor must be at least 3")
        if self.edge_policy not in EDGE_POLICIES:
            raise ConfigError(f"edge_policy must be one of {EDGE_POLICIES}")
        if self.block_size < 1 or self.workers < 1:
            raise ConfigError("block_size and workers must be positive")
        if self.us_variant not in US_VARIANTS:
            raise ConfigError(f"us_variant must be one of {US_VARIANTS}")
        if not 0 <= self.seed < 2 ** 128:
            raise ConfigError("seed must be a nonnegative integer below 2**128")

    def window_radius(self, lambda_m: float) -> float:
        return self.window_factor / math.sqrt(lambda_m)


@dataclass(frozen=True)
class TrialOutcome:
    mode: str  # "cellular", "d2d(i)" or "discarded"
    helper_order: int
    r_serving: float
    sinr: float
    covered_m: bool
    covered_d: bool
    n_helpers_in_cell: int
    discarded: bool = False
    reason: str = ""


@dataclass(frozen=True)
class Estimate:
    mean: float
    ci_halfwidth: float
    retained: int
    discarded: int

    @property
    def trials(self) -> int:
        return self.retained + self.discarded


@dataclass(frozen=True)
class DistanceHistogram:
    i: int
    edges: np.ndarray
    true_density: np.ndarray
    disk_density: np.ndarray
    total: int
    retained_true: int
    fewer_than_i: int
    edge_discarded: int
    retained_disk: int
    outside_bmax: int
    fewer_in_bmax: int


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-derived stream for one block of trials."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, block, 0]))


# ---------------------------------------------------------------- realizations


@dataclass
class _Realization:
    mx: np.ndarray
    my: np.ndarray
    tagged: int
    hx: np.ndarray
    hy: np.ndarray
    owner: np.ndarray
    in_cell: np.ndarray  # helper indices in the user's cell, nearest first
    dist: np.ndarray  # their distances to the user
    edge_ok: bool
    period: float
    W: float


def _points(rng, lam, W, toroidal):
    if toroidal:
        cnt = rng.poisson(lam * 4 * W * W)
        xy = rng.uniform(-W, W, size=(2, cnt))
        return xy[0], xy[1]
    cnt = rng.poisson(lam * math.pi * W * W)
    r = W * np.sqrt(rng.random(cnt))
    th = 2 * math.pi * rng.random(cnt)
    return r * np.cos(th), r * np.sin(th)


def _wrap(d, period):
    if period:
        return d - period * np.floor(d / period + 0.5)
    return d


def _realize(rng, n: NetworkParams, cfg: SimConfig, mbs_at_origin=False):
    W = cfg.window_radius(n.lambda_m)
    tor = cfg.edge_policy == "toroidal"
    period = 2 * W if tor else 0.0
    mx, my = _points(rng, n.lambda_m, W, tor)
    if mbs_at_origin:
        mx, my = np.r_[0.0, mx], np.r_[0.0, my]
    hx, hy = _points(rng, n.lambda_d, W, tor)
    if mx.size == 0:
        return None
    if mbs_at_origin:
        tagged = 0
    else:
        tagged = int(kernels.nearest_site([0.0], [0.0], mx, my, period)[0])
    owner = kernels.nearest_site(hx, hy, mx, my, period)
    idx = np.flatnonzero(owner == tagged)
    d = np.hypot(_wrap(hx[idx], period), _wrap(hy[idx], period))
    order = np.argsort(d, kind="stable")
    idx, d = idx[order], d[order]
    edge_ok = True
    if not tor:
        # an MBS outside the window lies at least W - |p| from p
        tx, ty = mx[tagged], my[tagged]
        reach = W - np.hypot(hx[idx], hy[idx])
        edge_ok = bool(np.all(np.hypot(hx[idx] - tx, hy[idx] - ty) < reach)) and math.hypot(tx, ty) < W
    return _Realization(mx, my, tagged, hx, hy, owner, idx, d, edge_ok, period, W)


def _tail_interference(lam, W, alpha):
    # mean power from an HPPP beyond radius W (unit-mean fading)
    return 2 * math.pi * lam * W ** (2 - alpha) / (alpha - 2)


def _d2d_interference(rng, z: _Realization, n: NetworkParams):
    """Power from one uniformly chosen helper in every other nonempty cell."""
    mask = z.owner != z.tagged
    a = z.owner[mask]
    if a.size == 0:
        return 0.0
    pr = rng.random(a.size)
    order = np.lexsort((pr, a))
    a_sorted = a[order]
    last = np.r_[a_sorted[1:] != a_sorted[:-1], True]
    chosen = np.flatnonzero(mask)[order[last]]
    d = np.hypot(_wrap(z.hx[chosen], z.period), _wrap(z.hy[chosen], z.period))
    g = rng.exponential(size=chosen.size)
    total = float(np.sum(g * d ** -n.alpha))
    if not z.period:
        total += _tail_interference(n.lambda_int, z.W, n.alpha)
    return total


def _cell_interference(rng, z: _Realization, n: NetworkParams):
    others = np.arange(z.mx.size) != z.tagged
    d = np.hypot(_wrap(z.mx[others], z.period), _wrap(z.my[others], z.period))
    g = rng.exponential(size=d.size)
    total = float(np.sum(g * d ** -n.alpha))
    if not z.period:
        total += _tail_interference(n.lambda_m, z.W, n.alpha)
    return total


def _select(rng, avail, n_cell, scheme, k, variant):
    """Index (0-based, by distance) of the serving helper, or -1 for cellular."""
    m = min(n_cell, k)
    if m == 0:
        return -1
    if scheme is SelectionScheme.NS:
        hits = np.flatnonzero(avail[:m])
        return int(hits[0]) if hits.size else -1
    if variant == "us_select_then_check":
        j = int(rng.integers(m))
        return j if avail[j] else -1
    hits = np.flatnonzero(avail[:m])
    return int(hits[rng.integers(hits.size)]) if hits.size else -1


def run_trial(rng: np.random.Generator, n: NetworkParams, cache: CacheParams, scheme, c: int, k: int,
              cfg: SimConfig = SimConfig()) -> TrialOutcome:
    """One realization for a request of content ``c`` with at most ``k`` helpers polled."""
    scheme = SelectionScheme.parse(scheme)
    h = hit_d2d(c, cache)
    z = _realize(rng, n, cfg)
    if z is None:
        return TrialOutcome("discarded", 0, math.nan, math.nan, False, False, 0, True, "no_mbs")
    if not z.edge_ok:
        return TrialOutcome("discarded", 0, math.nan, math.nan, False, False, z.in_cell.size, True, "edge")
    n_cell = z.in_cell.size
    avail = rng.random(min(n_cell, k)) < h
    j = _select(rng, avail, n_cell, scheme, k, cfg.us_variant)
    fade = rng.exponential()
    if j >= 0:
        r = float(z.dist[j])
        sinr = fade * r ** -n.alpha / (n.sigma2 / n.P_d + _d2d_interference(rng, z, n))
        return TrialOutcome(f"d2d({j + 1})", j + 1, r, sinr, False, sinr >= n.tau_d, n_cell)
    r = math.hypot(_wrap(z.mx[z.tagged], z.period), _wrap(z.my[z.tagged], z.period))
    sinr = fade * r ** -n.alpha / (n.sigma2 / n.P_m + _cell_interference(rng, z, n))
    return TrialOutcome("cellular", 0, r, sinr, sinr >= n.tau_m, False, n_cell)


# ---------------------------------------------------------------- block functions
# each returns an array of shape (size, m); NaN marks a discarded trial


def _blk_p_in(rng, size, n, cfg):
    W = cfg.window_radius(n.lambda_m)
    counts = rng.poisson(n.lambda_m * math.pi * W * W, size=size)
    width = max(int(counts.max()), 2)
    r = W * np.sqrt(rng.random((size, width)))
    th = 2 * math.pi * rng.random((size, width))
    valid = np.arange(width)[None, :] < counts[:, None]
    x = np.where(valid, r * np.cos(th), np.inf)
    y = np.where(valid, r * np.sin(th), np.inf)
    d0 = np.hypot(x, y)
    t = np.argmin(d0, axis=1)
    rows = np.arange(size)
    tx, ty = x[rows, t], y[rows, t]
    dd = np.hypot(x - tx[:, None], y - ty[:, None])
    dd[rows, t] = np.inf
    dd[~valid] = np.inf
    nn = dd.min(axis=1)
    ydist = d0[rows, t]
    out = (0.5 * nn >= ydist).astype(float)
    # neighbour search is exact only if no outside MBS could be nearer
    bad = (counts < 2) | ~(ydist + nn <= W)
    out[bad] = np.nan
    return out[:, None]


def _blk_helper_count(rng, size, n, cfg, anchor="user"):
    out = np.empty((size, 1))
    for t in range(size):
        z = _realize(rng, n, cfg, mbs_at_origin=(anchor == "mbs"))
        if z is None or not z.edge_ok:
            out[t] = np.nan
        else:
            out[t] = z.in_cell.size
    return out


def _blk_modes(rng, size, n, cfg, combos=()):
    counts = _blk_helper_count(rng, size, n, cfg)[:, 0]
    out = np.full((size, len(combos)), np.nan)
    for col, (scheme, h, k) in enumerate(combos):
        scheme = SelectionScheme.parse(scheme)
        avail = rng.random((size, k)) < h
        pick = rng.random(size)
        for t in range(size):
            if np.isnan(counts[t]):
                continue
            m = min(int(counts[t]), k)
            a = avail[t, :m]
            if scheme is SelectionScheme.NS or cfg.us_variant == "us_check_then_select":
                out[t, col] = float(a.any())
            else:
                out[t, col] = float(m > 0 and a[int(pick[t] * m)])
    return out


def _blk_distances(rng, size, n, cfg, imax=4):
    """Columns: true-cell R_1..R_imax, disk-approximation R_1..R_imax, inside-B_max flag."""
    out = np.full((size, 2 * imax + 1), np.nan)
    for t in range(size):
        z = _realize(rng, n, cfg)
        if z is None or not z.edge_ok:
            continue
        m = min(imax, z.dist.size)
        out[t, :m] = z.dist[:m]
        tx, ty = z.mx[z.tagged], z.my[z.tagged]
        others = np.arange(z.mx.size) != z.tagged
        X = 0.5 * float(np.min(np.hypot(z.mx[others] - tx, z.my[others] - ty))) if others.any() else math.inf
        inside = math.hypot(tx, ty) <= X
        out[t, 2 * imax] = float(inside)
        if inside:
            near = np.hypot(z.hx - tx, z.hy - ty) <= X
            dd = np.sort(np.hypot(z.hx[near], z.hy[near]))
            m = min(imax, dd.size)
            out[t, imax:imax + m] = dd[:m]
    return out


def _blk_d2d_sinr(rng, size, n, cfg, imax=4):
    out = np.full((size, imax), np.nan)
    for t in range(size):
        z = _realize(rng, n, cfg)
        if z is None or not z.edge_ok:
            continue
        m = min(imax, z.dist.size)
        if m == 0:
            continue
        interf = n.sigma2 / n.P_d + _d2d_interference(rng, z, n)
        fade = rng.exponential(size=imax)[:m]
        out[t, :m] = fade * z.dist[:m] ** -n.alpha / interf
    return out


def _blk_cell_sinr(rng, size, n, cfg):
    """Whole-plane PPP seen from the origin via ordered distances r_j^2 = G_j / (lambda pi)."""
    a = n.lambda_m * math.pi
    width = int(_CELL_TERMS + 6 * math.sqrt(_CELL_TERMS))
    arrivals = np.cumsum(rng.exponential(size=(size, width)), axis=1)
    fades = rng.exponential(size=(size, width))
    power = fades * (arrivals / a) ** (-n.alpha / 2)
    keep = arrivals <= _CELL_TERMS
    interf = np.sum(np.where(keep, power, 0.0), axis=1) - power[:, 0]
    # mean far-field power beyond the cutoff radius
    interf += _tail_interference(n.lambda_m, math.sqrt(_CELL_TERMS / a), n.alpha)
    sinr = power[:, 0] / (n.sigma2 / n.P_m + interf)
    return sinr[:, None]


def _blk_overall(rng, size, n, cfg, cache=None, scheme="NS", c=1, k=1, loads=(0.0, 0.0)):
    """Columns: covered indicator, rate sample (bps)."""
    out = np.full((size, 2), np.nan)
    penalty = 1.0 if hit_mbs(c, cache) else n.beta
    for t in range(size):
        o = run_trial(rng, n, cache, scheme, c, k, cfg)
        if o.discarded:
            continue
        users = 1 + rng.poisson(loads[0] if o.helper_order else loads[1])
        if o.helper_order:
            out[t] = (float(o.covered_d), n.W_d / users * math.log2(1 + o.sinr))
        else:
            out[t] = (float(o.covered_m), n.W_m / users * math.log2(1 + o.sinr) * penalty)
    return out


_BLOCKS = {
    "p_in": _blk_p_in,
    "helper_count": _blk_helper_count,
    "modes": _blk_modes,
    "distances": _blk_distances,
    "d2d_sinr": _blk_d2d_sinr,
    "cell_sinr": _blk_cell_sinr,
    "overall": _blk_overall,
}


def _run_block(task):
    name, block, size, n, cfg, kw = task
    return _BLOCKS[name](block_rng(cfg.seed, block), size, n, cfg, **kw)


def _samples(name, n: NetworkParams, cfg: SimConfig, **kw) -> np.ndarray:
    """Per-trial outputs of one block function, in block order."""
    bs = cfg.block_size
    tasks = [
        (name, b, min(bs, cfg.trials - b * bs), n, cfg, kw)
        for b in range(-(-cfg.trials // bs))
    ]
    if cfg.workers == 1:
        parts = [_run_block(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(_run_block, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    return np.concatenate(parts, axis=0)


def _summarize(x, strict=True) -> Estimate:
    x = np.asarray(x, dtype=float)
    kept = x[~np.isnan(x)]
    nk = kept.size
    if strict and nk < MIN_TRIALS:
        raise InsufficientSamplesError(f"only {nk} retained trials; at least {MIN_TRIALS} required")
    if nk == 0:
        return Estimate(math.nan, math.inf, 0, x.size)
    mean = float(np.mean(kept))
    if nk < MIN_TRIALS:
        ci = math.inf
    else:
        ci = Z95 * float(np.std(kept, ddof=1)) / math.sqrt(nk)
    return Estimate(mean, ci, nk, x.size - nk)


# ---------------------------------------------------------------- public estimators


def helper_count_samples(n: NetworkParams, cfg: SimConfig, anchor: str = "user") -> np.ndarray:
    """Helper counts in the user's cell (``anchor="user"``) or in a cell whose MBS is at the origin."""
    if anchor not in ("user", "mbs"):
        raise DomainError("anchor must be 'user' or 'mbs'")
    return _samples("helper_count", n, cfg, anchor=anchor)[:, 0]


def mode_probabilities(n: NetworkParams, cache: CacheParams, combos, cfg: SimConfig, strict=True):
    """P[D2D mode] for each (scheme, c, k) in ``combos``, all from the same realizations."""
    spec = tuple((SelectionScheme.parse(s).value, float(hit_d2d(c, cache)), int(k)) for s, c, k in combos)
    x = _samples("modes", n, cfg, combos=spec)
    return [_summarize(x[:, j], strict) for j in range(len(spec))]


def d2d_sinr_samples(n: NetworkParams, cfg: SimConfig, imax: int = 4) -> np.ndarray:
    """SINR of the link to the i-th nearest in-cell helper, columns i = 1..imax (NaN if absent)."""
    return _samples("d2d_sinr", n, cfg, imax=imax)


def cellular_sinr_samples(n: NetworkParams, cfg: SimConfig) -> np.ndarray:
    return _samples("cell_sinr", n, cfg)[:, 0]


def estimate(observable: str, n: NetworkParams, cfg: SimConfig, *, cache: CacheParams | None = None,
             scheme=None, c: int = 1, k: int = 1, i: int = 1, tau=None, strict: bool = True) -> Estimate:
    """Sample mean and 95% normal-approximation CI of a scalar observable.

    ``strict`` enforces the minimum of 100 retained trials; otherwise small
    runs return an infinite CI.
    """
    if observable == "p-in":
        return _summarize(_samples("p_in", n, cfg)[:, 0], strict)
    if observable == "helper-count":
        return _summarize(helper_count_samples(n, cfg), strict)
    if observable == "mode":
        return mode_probabilities(n, cache, [(scheme, c, k)], cfg, strict)[0]
    if observable in ("coverage-cellular", "rate-cellular"):
        s = cellular_sinr_samples(n, cfg)
        t = n.tau_m if tau is None else tau
        return _summarize((s >= t).astype(float) if observable.startswith("coverage") else np.log2(1 + s), strict)
    if observable in ("coverage-d2d", "rate-d2d"):
        s = d2d_sinr_samples(n, cfg, imax=i)[:, i - 1]
        t = n.tau_d if tau is None else tau
        vals = np.where(np.isnan(s), np.nan, (s >= t) if observable.startswith("coverage") else np.log2(1 + s))
        return _summarize(vals, strict)
    if observable in ("coverage", "rate"):
        if cache is None or scheme is None:
            raise DomainError(f"{observable} needs a cache and a scheme")
        loads = user_loads(scheme, k, n, cache)
        x = _samples("overall", n, cfg, cache=cache, scheme=SelectionScheme.parse(scheme).value, c=c, k=k,
                     loads=loads)
        return _summarize(x[:, 0 if observable == "coverage" else 1], strict)
    raise DomainError(f"unknown observable {observable!r}; expected one of {OBSERVABLES}")


def distance_samples(n: NetworkParams, cfg: SimConfig, imax: int = 4) -> np.ndarray:
    """Per-trial distances: columns 0..imax-1 true cell, imax..2*imax-1 inside B_max, then the inside flag."""
    return _samples("distances", n, cfg, imax=imax)


def conditional_distance_histogram(i: int, n: NetworkParams, cfg: SimConfig, edges=None,
                                   samples=None) -> DistanceHistogram:
    """Histograms of the i-th in-cell helper distance under both conditionings.

    True-cell: realizations with fewer than ``i`` helpers in the user's cell
    are dropped. Disk approximation: additionally the user must lie in B_max
    and the i-th nearest helper is taken among those inside B_max.
    ``samples`` reuses the output of :func:`distance_samples` (any imax >= i).
    """
    if int(i) != i or i < 1:
        raise DomainError("i must be a positive integer")
    x = distance_samples(n, cfg, imax=i) if samples is None else samples
    imax = (x.shape[1] - 1) // 2
    if imax < i:
        raise DomainError(f"samples hold orders up to {imax}, need {i}")
    true_r = x[:, i - 1]
    disk_r = x[:, imax + i - 1]
    flag = x[:, 2 * imax]
    edge = np.isnan(flag)
    if edges is None:
        top = np.nanquantile(true_r, 0.999) if np.any(~np.isnan(true_r)) else 1.0
        edges = np.linspace(0.0, top, 61)
    edges = np.asarray(edges, dtype=float)

    def density(v):
        v = v[~np.isnan(v)]
        counts, _ = np.histogram(v, bins=edges)
        # mass beyond the last edge still counts toward normalization
        return counts / max(v.size, 1) / np.diff(edges)

    inside = flag == 1
    return DistanceHistogram(
        i=i,
        edges=edges,
        true_density=density(true_r),
        disk_density=density(disk_r),
        total=x.shape[0],
        retained_true=int(np.sum(~np.isnan(true_r))),
        fewer_than_i=int(np.sum(np.isnan(true_r) & ~edge)),
        edge_discarded=int(np.sum(edge)),
        retained_disk=int(np.sum(~np.isnan(disk_r))),
        outside_bmax=int(np.sum(flag == 0)),
        fewer_in_bmax=int(np.sum(inside & np.isnan(disk_r))),
    )


def histogram_l1(edges, density, pdf_cdf) -> float:
    """L1 distance between a histogram and a model, computed on bin masses.

    ``pdf_cdf`` maps the edges to the model CDF; mass outside the histogram
    range counts toward the distance.
    """
    edges = np.asarray(edges, dtype=float)
    model = np.diff(pdf_cdf(edges))
    emp = density * np.diff(edges)
    outside_model = 1.0 - float(np.sum(model))
    outside_emp = 1.0 - float(np.sum(emp))
    return float(np.sum(np.abs(model - emp)) + abs(outside_model - outside_emp))
