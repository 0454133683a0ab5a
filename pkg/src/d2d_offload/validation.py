"""Analytic-versus-simulation reconciliation checks.

Each check returns a :class:`CheckResult` whose ``lines`` list the measured
deltas next to their tolerances. ``scale`` multiplies every Monte Carlo trial
count, so quick runs are possible; tolerances never change with it.
"""
from __future__ import annotations

import io
import math
import os
import tempfile
from contextlib import redirect_stdout
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid, simpson
from scipy.special import gammainc

from . import kernels
from .config import ExperimentConfig
from .content import CacheParams
from .geometry import (
    GeometryParams,
    distance_distribution,
    lens_area,
    lens_area_derivative,
    unconstrained_pdf,
)
from .modes import SelectionScheme, p_d2d_bound, p_d2d_mode, p_served_by_ith
from .montecarlo import (
    SimConfig,
    cellular_sinr_samples,
    conditional_distance_histogram,
    d2d_sinr_samples,
    distance_samples,
    estimate,
    histogram_l1,
    mode_probabilities,
)
from .performance import (
    coverage_cellular,
    coverage_gain,
    d2d_link_coverage,
    optimal_k,
)
from .special import hyp2f1, regularized_upper_gamma

__all__ = ["CheckResult", "CHECKS", "run_checks", "REFERENCE_AREA"]

REFERENCE_AREA = math.pi * 500.0 ** 2
TAU_GRID_DB = tuple(range(-10, 21, 5))


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    lines: list = field(default_factory=list)

    def summary(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number:2d} {self.name}"


def _trials(n, scale):
    return max(100, int(round(n * scale)))


def _sim(cfg: ExperimentConfig, trials, seed_offset=0):
    return replace(cfg.sim, trials=trials, seed=cfg.sim.seed + seed_offset)


# ---------------------------------------------------------------- 1


def check_p_in(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(1, "user-inside-B_max probability is 0.200 +- 0.005", True)
    trials = _trials(1_000_000, scale)
    for j, lm in enumerate((cfg.network.lambda_m, cfg.network.lambda_m * 7.3)):
        n = replace(cfg.network, lambda_m=lm)
        e = estimate("p-in", n, _sim(cfg, trials, j))
        ok = abs(e.mean - 0.2) <= 0.005
        res.passed &= ok
        res.lines.append(
            f"lambda_m={lm:.3e}/m^2 trials={e.retained}: p_in={e.mean:.4f} (ci {e.ci_halfwidth:.4f}) "
            f"|delta|={abs(e.mean - 0.2):.4f} tol 0.005 {'ok' if ok else 'FAIL'}"
        )
    return res


# ---------------------------------------------------------------- 2


def check_mode_probabilities(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(2, "mode probabilities: analytic vs simulation within 3 sigma", True)
    n, cache = cfg.network, cfg.cache
    ks, cs = (1, 2, 4, 8), (1, 10, 100)
    combos = [(s, c, k) for s in ("NS", "US") for c in cs for k in ks]
    trials = _trials(100_000, scale)
    est = mode_probabilities(n, cache, combos, _sim(cfg, trials))
    for (s, c, k), e in zip(combos, est):
        p = p_d2d_mode(s, c, k, n.eta, cache)
        sigma = math.sqrt(max(p * (1 - p), 0.0) / e.retained)
        ok = abs(e.mean - p) <= 3 * sigma
        res.passed &= ok
        res.lines.append(
            f"{s} c={c:<3d} k={k}: analytic={p:.4f} mc={e.mean:.4f} |delta|={abs(e.mean - p):.4f} "
            f"3sigma={3 * sigma:.4f} {'ok' if ok else 'FAIL'}"
        )
    for c in cs:
        col = [p_d2d_mode("US", c, k, n.eta, cache) for k in ks]
        per_i = [sum(p_served_by_ith("US", i, c, k, n.eta, cache) for i in range(1, k + 1)) for k in ks]
        spread = max(col + per_i) - min(col + per_i)
        ok = spread <= 1e-12
        res.passed &= ok
        res.lines.append(f"US c={c}: spread over k of the D2D probability {spread:.1e} {'ok' if ok else 'FAIL'}")
    # which US simulation variant reproduces the closed form
    other = "us_check_then_select" if cfg.sim.us_variant == "us_select_then_check" else "us_select_then_check"
    alt = mode_probabilities(
        n, cache, [("US", 1, k) for k in ks], replace(_sim(cfg, _trials(20_000, scale), 7), us_variant=other)
    )
    for k, e in zip(ks, alt):
        p = p_d2d_mode("US", 1, k, n.eta, cache)
        res.lines.append(f"info {other} c=1 k={k}: mc={e.mean:.4f} vs closed form {p:.4f}")
    return res


# ---------------------------------------------------------------- 3


def check_bounds(cfg: ExperimentConfig, scale=1.0, draws=500, seed=3) -> CheckResult:
    res = CheckResult(3, "large-eta bounds: tight at eta=10, never below the exact value", True)
    cache = cfg.cache
    worst = 0.0
    for c in (1, 10, 100, 1000):
        for k in range(1, 5):
            exact = p_d2d_mode("NS", c, k, 10.0, cache)
            bound = sum(p_d2d_bound("NS", i, c, k, cache) for i in range(1, k + 1))
            gap = (bound - exact) / bound
            worst = max(worst, gap)
    ok = worst <= 0.10
    res.passed &= ok
    res.lines.append(f"eta=10, k<=4: worst relative gap {worst:.4f} tol 0.10 {'ok' if ok else 'FAIL'}")
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(draws):
        eta = float(10 ** rng.uniform(-1, 3))
        k = int(rng.integers(1, 11))
        cp = CacheParams(L=int(rng.integers(50, 2001)), zeta=float(rng.uniform(0.1, 1.6)), C_m=1,
                         C_d=int(rng.integers(1, 101)))
        c = int(rng.integers(1, cp.L + 1))
        s = SelectionScheme.NS if rng.random() < 0.5 else SelectionScheme.US
        bounds = [p_d2d_bound(s, i, c, k, cp) for i in range(1, k + 1)]
        exact = [p_served_by_ith(s, i, c, k, eta, cp) for i in range(1, k + 1)]
        # the US per-helper limit h/k is not a finite-eta bound (helper 1 gains
        # weight in sparse cells); only its sum over i is
        if s is SelectionScheme.NS:
            violations += sum(e > b * (1 + 1e-12) for e, b in zip(exact, bounds))
        violations += math.fsum(exact) > math.fsum(bounds) * (1 + 1e-12)
    ok = violations == 0
    res.passed &= ok
    res.lines.append(f"{draws} random draws: {violations} bound violations {'ok' if ok else 'FAIL'}")
    return res


# ---------------------------------------------------------------- 4


def _model_cdf(dist):
    cum = np.r_[0.0, cumulative_trapezoid(dist.density, dist.grid)]
    return lambda r: np.interp(r, dist.grid, cum)


def check_distance_distribution(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(4, "distance distribution vs true-cell histogram (L1 <= 0.08)", True)
    n = replace(cfg.network, lambda_m=20 / REFERENCE_AREA, lambda_d=200 / REFERENCE_AREA)
    g = GeometryParams(n.lambda_m, n.lambda_d, omega2=cfg.omega2)
    # about 5% of realizations have fewer than 4 helpers in the cell
    x = distance_samples(n, _sim(cfg, _trials(106_000, scale), 40), imax=4)
    for i in range(1, 5):
        h = conditional_distance_histogram(i, n, cfg.sim, samples=x)
        model = distance_distribution(i, g, imax=10)
        l1 = histogram_l1(h.edges, h.true_density, _model_cdf(model))
        l1_free = histogram_l1(
            h.edges, h.true_density, lambda r, i=i: gammainc(i, n.lambda_d * math.pi * np.asarray(r) ** 2)
        )
        ok = l1 <= 0.08 and (i == 1 or l1 < l1_free)
        res.passed &= ok
        res.lines.append(
            f"i={i} retained={h.retained_true}: L1 model={l1:.4f} tol 0.08, unconstrained={l1_free:.4f} "
            f"{'ok' if ok else 'FAIL'}"
        )
    return res


# ---------------------------------------------------------------- 5


def check_sparse_limit(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(5, "sparse-MBS limit approaches the unconstrained distance", True)
    ld = 200 / REFERENCE_AREA
    l1s, t1s = [], []
    for f in (1, 10, 100):
        g = GeometryParams(20 / REFERENCE_AREA / f, ld)
        d = distance_distribution(1, g)
        l1s.append(float(simpson(np.abs(d.density - unconstrained_pdf(1, d.grid, ld)), x=d.grid)))
        t1s.append(d.t1_fraction())
        res.lines.append(f"lambda_m / {f:>3d}: L1={l1s[-1]:.4f} T1 fraction={t1s[-1]:.4f}")
    ok = l1s[0] > l1s[1] > l1s[2] and l1s[2] < 0.02 and t1s[0] > t1s[1] > t1s[2]
    res.passed = ok
    res.lines.append(f"monotone decrease, sparsest L1 < 0.02: {'ok' if ok else 'FAIL'}")
    return res


# ---------------------------------------------------------------- 6


def check_cellular(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(6, "cellular coverage: analytic vs simulation within 0.01", True)
    n = cfg.network
    s = cellular_sinr_samples(n, _sim(cfg, _trials(1_000_000, scale), 60))
    for tdb in TAU_GRID_DB:
        tau = 10 ** (tdb / 10)
        a = coverage_cellular(n, tau=tau)
        mc = float(np.mean(s >= tau))
        ok = abs(a - mc) <= 0.01
        res.passed &= ok
        res.lines.append(f"tau={tdb:+d} dB: analytic={a:.4f} mc={mc:.4f} |delta|={abs(a - mc):.4f} {'ok' if ok else 'FAIL'}")
    quiet = replace(n, sigma2=0.0, alpha=4.0)
    worst = 0.0
    for tdb in TAU_GRID_DB:
        tau = 10 ** (tdb / 10)
        closed = 1.0 / (1.0 + math.sqrt(tau) * (math.pi / 2 - math.atan(1 / math.sqrt(tau))))
        worst = max(worst, abs(closed - coverage_cellular(quiet, tau=tau)))
    ok = worst <= 1e-6
    res.passed &= ok
    res.lines.append(f"sigma2=0, alpha=4 closed form: worst |delta|={worst:.2e} tol 1e-6 {'ok' if ok else 'FAIL'}")
    return res


# ---------------------------------------------------------------- 7


def check_d2d_links(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(7, "D2D link coverage ordering and simulation gap <= 0.03", True)
    n = cfg.network
    taus = tuple(range(-10, 31, 5))
    cov = np.array([d2d_link_coverage(n, cfg.geometry, tau=10 ** (t / 10))[:4] for t in taus])
    gm = np.array([coverage_cellular(n, tau=10 ** (t / 10)) for t in taus])
    ordered = bool(np.all(np.diff(cov, axis=1) < 0))
    above = bool(np.any(cov[:, 0] > gm))
    res.passed &= ordered and above
    res.lines.append(f"strictly decreasing in i at every tau: {'ok' if ordered else 'FAIL'}")
    res.lines.append(f"Gamma_d1 > Gamma_m somewhere on the grid: {'ok' if above else 'FAIL'}")
    s = d2d_sinr_samples(n, _sim(cfg, _trials(100_000, scale), 70), imax=4)
    worst = 0.0
    for j, t in enumerate(taus):
        tau = 10 ** (t / 10)
        mc = [float(np.nanmean(np.where(np.isnan(s[:, i]), np.nan, s[:, i] >= tau))) for i in range(4)]
        gaps = np.abs(np.array(mc) - cov[j])
        worst = max(worst, float(gaps.max()))
        res.lines.append(
            f"tau={t:+d} dB: analytic " + " ".join(f"{v:.3f}" for v in cov[j])
            + " | mc " + " ".join(f"{v:.3f}" for v in mc) + f" | Gamma_m {gm[j]:.3f}"
        )
    ok = worst <= 0.03
    res.passed &= ok
    res.lines.append(f"worst analytic-vs-mc gap {worst:.4f} tol 0.03 {'ok' if ok else 'FAIL'}")
    return res


# ---------------------------------------------------------------- 8


def check_optimal_k(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(8, "optimal k: US at 1, NS interior and cache-invariant, rate k* nondecreasing in c", True)
    n, g = cfg.network, cfg.geometry
    ns_k = set()
    us_ok = True
    for zeta in (0.4, 0.8, 1.2):
        for cd in (5, 20, 50):
            cache = CacheParams(cfg.cache.L, zeta, cfg.cache.C_m, cd)
            for c in (1, 10, 100):
                kn, _ = optimal_k("coverage", "NS", c, n, cache, g)
                ku, _ = optimal_k("coverage", "US", c, n, cache, g)
                ns_k.add(kn)
                us_ok &= ku == 1
    ok1 = us_ok
    ok2 = len(ns_k) == 1 and min(ns_k) > 1
    res.lines.append(f"US coverage argmax is 1 everywhere: {'ok' if ok1 else 'FAIL'}")
    res.lines.append(f"NS coverage argmax set {sorted(ns_k)}: {'ok' if ok2 else 'FAIL'}")
    ks = [optimal_k("rate", "NS", c, n, cfg.cache, g)[0] for c in (1, 10, 100, 1000)]
    ok3 = all(a <= b for a, b in zip(ks, ks[1:]))
    res.lines.append(f"NS rate argmax for c=1,10,100,1000: {ks} {'ok' if ok3 else 'FAIL'}")
    res.passed = ok1 and ok2 and ok3
    return res


# ---------------------------------------------------------------- 9


def check_gain(cfg: ExperimentConfig, scale=1.0) -> CheckResult:
    res = CheckResult(9, "coverage gain ordering G_NS(1) > G_US(1) > 0", True)
    gains = coverage_gain(1, cfg.network, cfg.geometry, cfg.cache)
    ok = gains["NS"] > gains["US"] > 0
    res.passed = ok
    res.lines.append(f"G_NS(1)={gains['NS']:.1f}% G_US(1)={gains['US']:.1f}% {'ok' if ok else 'FAIL'}")
    return res


# ---------------------------------------------------------------- 10


def _hyp2f1_samples(rng, count):
    out = []
    for j in range(count):
        fam = j % 3
        if fam == 0:
            i = int(rng.integers(1, 11))
            eta = float(10 ** rng.uniform(-1, 3))
            out.append((1.0, i + 3.5, i + 1.0, eta / (eta + 3.5)))
        elif fam == 1:
            alpha = float(rng.uniform(2.2, 5.0))
            ab = 1 - 2 / alpha
            out.append((1.0, ab, 1 + ab, -float(10 ** rng.uniform(-4, 6))))
        else:
            alpha = float(rng.uniform(2.2, 5.0))
            out.append((1.0, 2 / alpha, 1 + 2 / alpha, -float(rng.uniform(0, 1))))
    return out


def check_kernels(cfg: ExperimentConfig, scale=1.0, seed=10) -> CheckResult:
    import mpmath

    res = CheckResult(10, "math kernels vs independent oracles", True)
    rng = np.random.default_rng(seed)
    mpmath.mp.dps = 30
    worst = 0.0
    for a, b, c, z in _hyp2f1_samples(rng, 1000):
        ref = float(mpmath.hyp2f1(a, b, c, z))
        worst = max(worst, abs(hyp2f1(a, b, c, z) - ref) / abs(ref))
    # the reference itself against explicit partial sums where those converge fast
    partial = 0.0
    for a, b, c, z in [(1.0, 4.5, 2.0, 0.5), (1.0, 0.5, 1.5, -0.6), (1.0, 13.5, 11.0, 0.7)]:
        term, total = mpmath.mpf(1), mpmath.mpf(1)
        for m in range(4000):
            term *= (a + m) * (b + m) / ((c + m) * (m + 1)) * mpmath.mpf(z)
            total += term
        partial = max(partial, float(abs(total - mpmath.hyp2f1(a, b, c, z)) / abs(total)))
    ok = worst <= 1e-9 and partial <= 1e-9
    res.passed &= ok
    res.lines.append(f"2F1 over 1000 call-site samples: worst rel err {worst:.2e} tol 1e-9, "
                     f"reference vs partial sums {partial:.1e} {'ok' if ok else 'FAIL'}")
    worst = 0.0
    for i in range(1, 31):
        for x in np.r_[0.0, np.geomspace(1e-3, 80, 40)]:
            ref = math.fsum(math.exp(-x + j * math.log(x) - math.lgamma(j + 1)) if x > 0 else float(j == 0)
                            for j in range(i))
            worst = max(worst, abs(regularized_upper_gamma(i, x) - ref) / max(ref, 1e-300))
    ok = worst <= 1e-12
    res.passed &= ok
    res.lines.append(f"upper incomplete gamma vs Poisson CDF: worst rel err {worst:.2e} tol 1e-12 {'ok' if ok else 'FAIL'}")
    pts = int(max(10_000, 1_000_000 * scale))
    bad = 0
    for _ in range(10):
        x = float(rng.uniform(50, 300))
        y = float(rng.uniform(1, x))
        r = float(rng.uniform(x - y, x + y))
        area = lens_area(r, y, x)
        rr = x * np.sqrt(rng.random(pts))
        th = 2 * math.pi * rng.random(pts)
        frac = np.mean(np.hypot(y + rr * np.cos(th), rr * np.sin(th)) <= r)
        est = frac * math.pi * x * x
        sd = math.pi * x * x * math.sqrt(max(frac * (1 - frac), 1e-12) / pts)
        bad += abs(est - area) > 3 * sd
    # allow one 3-sigma excursion in ten configurations (expected ~0.03)
    ok = bad <= 1
    res.passed &= ok
    res.lines.append(f"lens area vs rejection sampling ({pts} points x 10): {bad} outside 3 sigma {'ok' if ok else 'FAIL'}")
    worst = 0.0
    for _ in range(200):
        x = float(rng.uniform(10, 300))
        y = float(rng.uniform(0.5, x))
        lo, hi = x - y, x + y
        r = float(rng.uniform(lo + 0.01 * (hi - lo), hi - 0.01 * (hi - lo)))
        h = 1e-6 * r
        fd = (float(kernels.lens_area(r + h, y, x)) - float(kernels.lens_area(r - h, y, x))) / (2 * h)
        an = lens_area_derivative(r, y, x)
        worst = max(worst, abs(fd - an) / abs(an))
    ok = worst <= 1e-6
    res.passed &= ok
    res.lines.append(f"lens derivative vs central difference: worst rel err {worst:.2e} tol 1e-6 {'ok' if ok else 'FAIL'}")
    return res


# ---------------------------------------------------------------- 11


def check_determinism(cfg: ExperimentConfig, scale=1.0, profile: str = "table1") -> CheckResult:
    from .cli import main

    res = CheckResult(11, "simulate output is byte-identical across worker counts", True)
    outputs = {}
    with tempfile.TemporaryDirectory() as tmp:
        for workers in (1, 2, 3):
            path = os.path.join(tmp, f"w{workers}.csv")
            argv = ["simulate", "--profile", profile, "--observable", "coverage", "--scheme", "NS,US",
                    "--k", "1..2", "--c", "1", "--trials", str(_trials(600, scale)), "--seed", "77",
                    "--workers", str(workers), "--block-size", "64", "--out", path]
            with redirect_stdout(io.StringIO()):
                code = main(argv)
            data = b""
            if os.path.exists(path):
                with open(path, "rb") as fh:
                    data = fh.read()
            outputs[workers] = (code, data)
    same = len({v for v in outputs.values()}) == 1 and outputs[1][0] == 0
    res.passed = same
    res.lines.append(f"workers 1/2/3 produce identical bytes: {'ok' if same else 'FAIL'}")
    return res


CHECKS = {
    1: check_p_in,
    2: check_mode_probabilities,
    3: check_bounds,
    4: check_distance_distribution,
    5: check_sparse_limit,
    6: check_cellular,
    7: check_d2d_links,
    8: check_optimal_k,
    9: check_gain,
    10: check_kernels,
    11: check_determinism,
}


def run_checks(cfg: ExperimentConfig, numbers=None, scale=1.0, log=print):
    results = []
    for num in numbers or sorted(CHECKS):
        r = CHECKS[num](cfg, scale=scale)
        log(r.summary())
        for line in r.lines:
            log(f"    {line}")
        results.append(r)
    return results
