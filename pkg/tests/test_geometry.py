import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad
from scipy.special import gammaincc

from d2d_offload.errors import DomainError, GeometryError
from d2d_offload.geometry import (
    P_IN,
    GeometryParams,
    distance_distribution,
    distance_terms,
    kappa,
    lens_area,
    lens_area_derivative,
    max_disk_radius_cdf,
    max_disk_radius_pdf,
    p_at_least_i_inside,
    p_user_inside,
    p_user_inside_integral,
    radius_grid,
    tail_probability_unconstrained,
    unconstrained_pdf,
    user_distance_cdf,
    user_distance_pdf,
)

A = math.pi * 500.0 ** 2
TABLE1 = GeometryParams(10 / A, 100 / A)
FIG5 = GeometryParams(20 / A, 200 / A)


def _fx(x, lm):
    return 8 * lm * math.pi * x * math.exp(-4 * lm * math.pi * x * x)


def _Fy(x, lm):
    return -math.expm1(-lm * math.pi * x * x)


def _fy(y, lm):
    return 2 * lm * math.pi * y * math.exp(-lm * math.pi * y * y)


def test_marginals_are_densities():
    g = TABLE1
    for pdf, cdf in ((max_disk_radius_pdf, max_disk_radius_cdf), (user_distance_pdf, user_distance_cdf)):
        tot, _ = quad(lambda t: pdf(t, g), 0, np.inf)
        assert tot == pytest.approx(1.0, abs=1e-10)
        assert quad(lambda t: pdf(t, g), 0, 120.0)[0] == pytest.approx(cdf(120.0, g), rel=1e-10)


@pytest.mark.parametrize("lm", [1e-7, 10 / A, 1e-3])
def test_inside_probability_is_one_fifth_for_any_density(lm):
    g = GeometryParams(lm, 10 * lm)
    assert p_user_inside(g) == P_IN == 0.2
    assert p_user_inside_integral(g) == pytest.approx(0.2, abs=1e-10)


@pytest.mark.parametrize("i", [1, 2, 4, 7])
@pytest.mark.parametrize("eta", [0.5, 10.0, 80.0])
def test_at_least_i_inside_matches_quadrature(i, eta):
    lm = 10 / A
    ld = eta * lm

    def f(x):
        return _fx(x, lm) * _Fy(x, lm) ** 2 * (1.0 - gammaincc(i, ld * math.pi * x * x))

    want = quad(f, 0, np.inf, epsabs=0, epsrel=1e-11, limit=400)[0] / 0.2
    assert p_at_least_i_inside(i, eta) == pytest.approx(want, rel=1e-9)


def test_at_least_i_inside_dense_limit():
    assert p_at_least_i_inside(3, math.inf) == pytest.approx(1 / 3)
    assert p_at_least_i_inside(3, 1e9) == pytest.approx(1 / 3, rel=1e-6)
    with pytest.raises(DomainError):
        p_at_least_i_inside(0, 1.0)


def test_lens_regimes_and_limits():
    y, x = 40.0, 100.0
    # r at the inner limit: small disk fully inside
    assert lens_area(x - y, y, x) == pytest.approx(math.pi * (x - y) ** 2, rel=1e-9)
    assert lens_area(x + y, y, x) == pytest.approx(math.pi * x * x, rel=1e-9)
    with pytest.raises(GeometryError):
        lens_area(x + y + 1.0, y, x)
    with pytest.raises(GeometryError):
        lens_area_derivative(x - y, y, x)


def test_lens_symmetric_case_closed_form():
    # two unit-radius circles with centres 1 apart: 2 pi / 3 - sqrt(3) / 2
    assert lens_area(1.0, 1.0, 1.0) == pytest.approx(2 * math.pi / 3 - math.sqrt(3) / 2, rel=1e-13)


@given(st.floats(10, 400), st.floats(0.05, 0.999), st.floats(0.01, 0.99))
@settings(max_examples=100, deadline=None)
def test_lens_area_monotone_and_bounded(x, yfrac, t):
    y = yfrac * x
    lo, hi = x - y, x + y
    r = lo + t * (hi - lo)
    a = lens_area(r, y, x)
    assert 0 <= a <= min(math.pi * r * r, math.pi * x * x) * (1 + 1e-12)
    assert lens_area_derivative(r, y, x) >= 0
    r2 = min(hi, r + 0.01 * (hi - lo))
    assert lens_area(r2, y, x) >= a - 1e-9 * a


def test_lens_area_against_rejection_sampling():
    rng = np.random.default_rng(5)
    for _ in range(6):
        x = rng.uniform(50, 300)
        y = rng.uniform(1, x)
        r = rng.uniform(x - y, x + y)
        n = 400_000
        rr = x * np.sqrt(rng.random(n))
        th = 2 * np.pi * rng.random(n)
        frac = np.mean(np.hypot(y + rr * np.cos(th), rr * np.sin(th)) <= r)
        sd = math.pi * x * x * math.sqrt(frac * (1 - frac) / n)
        assert abs(frac * math.pi * x * x - lens_area(r, y, x)) < 4 * sd + 1e-9


@given(st.floats(10, 300), st.floats(0.02, 0.98), st.floats(0.02, 0.98))
@settings(max_examples=100, deadline=None)
def test_lens_derivative_matches_finite_difference(x, yfrac, t):
    y = yfrac * x
    r = (x - y) + t * 2 * y
    h = 1e-6 * r
    fd = (lens_area(r + h, y, x) - lens_area(r - h, y, x)) / (2 * h)
    assert lens_area_derivative(r, y, x) == pytest.approx(fd, rel=1e-6)


def _kappa_oracle(r, lm):
    inner = lambda y: quad(lambda x: _fx(x, lm) * _Fy(x, lm), y + r, np.inf, epsabs=0, epsrel=1e-12)[0]
    return quad(lambda y: _fy(y, lm) * inner(y), 0, np.inf, epsabs=0, epsrel=1e-11)[0]


@pytest.mark.parametrize("r", [0.0, 5.0, 50.0, 150.0, 400.0])
def test_kappa_closed_form_matches_double_integral(r):
    lm = 10 / A
    assert kappa(r, lm) == pytest.approx(_kappa_oracle(r, lm), rel=1e-8, abs=1e-18)


def test_kappa_frozen_values():
    lm = 10 / A
    assert kappa(0.0, lm) == pytest.approx(1 / 15, rel=1e-13)
    assert kappa(50.0, lm) == pytest.approx(0.0254694140, rel=1e-8)
    assert kappa(150.0, lm) == pytest.approx(0.000516434147, rel=1e-8)


@given(st.floats(0, 5000), st.floats(1e-8, 1e-3))
@settings(max_examples=100, deadline=None)
def test_kappa_is_a_nonnegative_nonincreasing_mass(r, lm):
    k0, k1 = kappa(r, lm), kappa(r * 1.1 + 1.0, lm)
    assert 0.0 <= k1 <= k0 <= 1 / 15 + 1e-15


def _t1_oracle(i, r, g):
    lm, ld = g.lambda_m, g.lambda_d

    def integrand(x, y):
        if not abs(x - y) < r < x + y:
            return 0.0
        a = lens_area(r, y, x)
        da = lens_area_derivative(r, y, x)
        mu = ld * a
        return (_fy(y, lm) * _fx(x, lm) * _Fy(x, lm) * ld * da * math.exp(-mu) * mu ** (i - 1)
                / math.factorial(i - 1))

    val, _ = dblquad(integrand, 0, np.inf, lambda y: max(y, r - y), lambda y: r + y, epsabs=1e-16, epsrel=1e-9)
    return val / (0.2 * p_at_least_i_inside(i, g.eta))


@pytest.mark.parametrize("i,r", [(1, 30.0), (1, 90.0), (2, 60.0), (3, 120.0)])
def test_lens_term_matches_double_integral(i, r):
    t1, t2 = distance_terms(i, np.array([r]), TABLE1)
    assert t1[i - 1, 0] == pytest.approx(_t1_oracle(i, r, TABLE1), rel=1e-6)


@pytest.mark.parametrize("i", [1, 2, 3, 4])
@pytest.mark.parametrize("g", [TABLE1, FIG5], ids=["table1", "fig5"])
def test_distance_density_normalized(i, g):
    d = distance_distribution(i, g)
    assert np.all(d.density >= 0)
    assert abs(d.norm_defect) < 1e-5
    assert d.integrate() == pytest.approx(1.0, abs=1e-5)
    assert d.grid[0] == 0.0


def test_distance_means_frozen():
    assert distance_distribution(1, TABLE1).mean() == pytest.approx(49.8340, rel=1e-4)
    assert distance_distribution(2, TABLE1).mean() == pytest.approx(76.7475, rel=1e-4)


def test_radius_grid_shape():
    r = radius_grid(4, TABLE1)
    assert r[0] == 0.0 and len(r) == 400 and np.all(np.diff(r) > 0)
    assert tail_probability_unconstrained(4, r[-1], TABLE1.lambda_d) < 1e-5


def test_unconstrained_pdf_is_generalized_gamma():
    ld = 100 / A
    for i in (1, 3):
        tot = quad(lambda t: unconstrained_pdf(i, t, ld), 0, np.inf)[0]
        mean = quad(lambda t: t * unconstrained_pdf(i, t, ld), 0, np.inf)[0]
        assert tot == pytest.approx(1.0, abs=1e-10)
        assert mean == pytest.approx(math.gamma(i + 0.5) / (math.gamma(i) * math.sqrt(ld * math.pi)), rel=1e-9)


def _sample_disk_model(g, imax, n, seed):
    """Direct sampler of the inscribed-disk construction the density describes."""
    rng = np.random.default_rng(seed)
    lm, ld = g.lambda_m, g.lambda_d
    xs = []
    while sum(map(len, xs)) < n:
        x = np.sqrt(rng.exponential(1.0, 4 * n) / (4 * lm * math.pi))
        keep = rng.random(x.size) < (-np.expm1(-lm * math.pi * x * x)) ** 2
        xs.append(x[keep])
    x = np.concatenate(xs)[:n]
    u = rng.random(n) * (-np.expm1(-lm * math.pi * x * x))
    y = np.sqrt(-np.log1p(-u) / (lm * math.pi))
    counts = rng.poisson(ld * math.pi * x * x)
    m = counts.max()
    rr = x[:, None] * np.sqrt(rng.random((n, m)))
    th = 2 * np.pi * rng.random((n, m))
    d = np.hypot(rr * np.cos(th) - y[:, None], rr * np.sin(th))
    d[np.arange(m)[None, :] >= counts[:, None]] = np.inf
    d.sort(axis=1)
    return d[:, :imax]


@pytest.mark.parametrize("i", [1, 2, 3])
def test_density_matches_direct_model_sampler(i):
    d = _sample_disk_model(TABLE1, 3, 120_000, seed=11)[:, i - 1]
    d = d[np.isfinite(d)]
    model = distance_distribution(i, TABLE1)
    edges = np.linspace(0, np.quantile(d, 0.999), 61)
    emp = np.histogram(d, bins=edges)[0] / d.size
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (model.density[1:] + model.density[:-1]) * np.diff(model.grid))])
    mass = np.diff(np.interp(edges, model.grid, cum))
    l1 = np.sum(np.abs(mass - emp))
    assert l1 < 0.025


def test_sparse_mbs_limit_approaches_unconstrained():
    l1s, fr = [], []
    for div in (1, 10, 100):
        g = GeometryParams(FIG5.lambda_m / div, FIG5.lambda_d)
        d = distance_distribution(1, g)
        free = unconstrained_pdf(1, d.grid, g.lambda_d)
        l1s.append(float(np.trapezoid(np.abs(d.density - free), d.grid)))
        fr.append(d.t1_fraction())
    assert l1s[0] > l1s[1] > l1s[2] and l1s[2] < 0.02
    assert fr[0] > fr[1] > fr[2] and fr[2] < 0.1


def test_appendix_lens_variant_changes_the_density():
    good = distance_distribution(2, FIG5)
    bad = distance_distribution(2, GeometryParams(FIG5.lambda_m, FIG5.lambda_d, omega2="appendix"))
    assert np.trapezoid(np.abs(good.density - np.interp(good.grid, bad.grid, bad.density)), good.grid) > 0.1


def test_parameter_validation():
    with pytest.raises(DomainError):
        GeometryParams(0.0, 1.0)
    with pytest.raises(DomainError):
        GeometryParams(1.0, 1.0, omega2="other")
    with pytest.raises(DomainError):
        distance_terms(0, [1.0], TABLE1)
    with pytest.raises(DomainError):
        distance_terms(1, [-1.0], TABLE1)
