import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from d2d_offload.content import CacheParams
from d2d_offload.errors import DomainError, UndefinedConditionalError
from d2d_offload.geometry import distance_distribution
from d2d_offload.performance import (
    avg_rate_overall,
    bandwidth_share,
    baseline_rates,
    coverage_cellular,
    coverage_d2d_ith,
    coverage_d2d_mode,
    coverage_gain,
    coverage_overall,
    d2d_link_coverage,
    delta_d,
    delta_m,
    ergodic_rate_link,
    interference_exponent,
    optimal_k,
    user_loads,
)


def _rho4(tau):
    return math.sqrt(tau) * (math.pi / 2 - math.atan(1 / math.sqrt(tau)))


@given(st.floats(1e-3, 1e4))
@settings(max_examples=60, deadline=None)
def test_delta_m_alpha4_closed_form(tau):
    assert delta_m(tau, 4.0) == pytest.approx(_rho4(tau), rel=1e-9)


@pytest.mark.parametrize("alpha", [2.5, 3.0, 3.7, 5.0])
def test_delta_m_general_alpha(alpha):
    tau = 3.0
    want = tau ** (2 / alpha) * quad(lambda u: 1 / (1 + u ** (alpha / 2)), tau ** (-2 / alpha), np.inf,
                                      epsabs=0, epsrel=1e-12, limit=400)[0]
    assert delta_m(tau, alpha) == pytest.approx(want, rel=1e-9)


def test_cellular_coverage_table1_frozen(net):
    assert coverage_cellular(net) == pytest.approx(0.0201314478, rel=1e-8)


@pytest.mark.parametrize("tau_db", [-10.0, 0.0, 10.0, 30.0])
def test_cellular_coverage_against_radial_quadrature(net, tau_db):
    tau = 10 ** (tau_db / 10)
    lm = net.lambda_m
    d = _rho4(tau)

    def f(r):
        return 2 * math.pi * lm * r * math.exp(-math.pi * lm * r * r * (1 + d) - tau * net.sigma2 * r ** 4 / net.P_m)

    want = (quad(f, 0, 2000.0, epsabs=0, epsrel=1e-11, limit=400, points=[100.0, 300.0])[0]
            + quad(f, 2000.0, np.inf, epsabs=0, epsrel=1e-11)[0])
    assert coverage_cellular(net, tau=tau) == pytest.approx(want, rel=1e-8)


def test_cellular_noise_free_limit(net):
    quiet = replace(net, sigma2=0.0)
    for tau in (0.1, 1.0, 10.0):
        assert coverage_cellular(quiet, tau=tau) == pytest.approx(1 / (1 + _rho4(tau)), rel=1e-12)


@pytest.mark.parametrize("alpha", [3.0, 4.0])
@pytest.mark.parametrize("s", [1e-2, 1e4, 1e8, 1e11])
def test_interference_exponent_matches_hypergeometric_reference(net, alpha, s):
    lam = net.lambda_int
    ref = s * delta_d(s, alpha, lam) / (alpha - 2)
    assert interference_exponent(s, lam, alpha) == pytest.approx(ref, rel=1e-7)


def test_interference_exponent_double_integral(net):
    lam, alpha, s = net.lambda_int, 4.0, 5e8
    a = lam * math.pi
    inner = lambda q: quad(lambda v: v / (1 + v ** alpha / s), q, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
    want = quad(lambda q: 2 * a * q * math.exp(-a * q * q) * inner(q), 0, np.inf, epsabs=0, epsrel=1e-10,
                limit=200)[0]
    assert interference_exponent(s, lam, alpha) == pytest.approx(want, rel=1e-7)


def test_d2d_link_coverage_table1_frozen(net):
    cov = d2d_link_coverage(net)
    assert cov[:4] == pytest.approx([0.235923, 0.047015, 0.008966, 0.001696], abs=2e-6)
    assert np.all(np.diff(cov) < 0)


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_d2d_link_coverage_against_radial_quadrature(net, geo):
    d = distance_distribution(1, geo, imax=10)
    tau, lam = net.tau_d, net.lambda_int

    def f(r):
        s = tau * r ** net.alpha
        return d(r) * math.exp(-2 * math.pi * lam * interference_exponent(s, lam, net.alpha)
                               - s * net.sigma2 / net.P_d)

    want = quad(f, 0, d.grid[-1], epsabs=0, epsrel=1e-8, limit=400, points=list(d.grid[1:60:4]))[0]
    assert coverage_d2d_ith(1, net, geo) == pytest.approx(want, rel=2e-4)


def test_exact_laplace_dominates_jensen(net, geo):
    for tau_db in (0.0, 20.0):
        t = 10 ** (tau_db / 10)
        jensen = d2d_link_coverage(net, geo, imax=4, tau=t)
        exact = d2d_link_coverage(net, geo, imax=4, tau=t, laplace="exact")
        assert np.all(exact >= jensen - 1e-12)
        assert np.all(exact - jensen < 0.05)


def test_d2d_beats_cellular_at_low_order(net, geo):
    assert coverage_d2d_ith(1, net, geo) > coverage_cellular(net)


def test_rates_against_coverage_integral(net, geo):
    want = quad(lambda t: coverage_cellular(net, tau=t) / (1 + t), 0, np.inf, limit=400)[0] / math.log(2)
    assert ergodic_rate_link("cellular", net, geo) == pytest.approx(want, rel=1e-6)
    assert ergodic_rate_link("cellular", net, geo) == pytest.approx(2.148147, rel=1e-6)
    r = [ergodic_rate_link("d2d", net, geo, i=i) for i in (1, 2, 3)]
    assert r == pytest.approx([7.130655, 4.334684, 3.080208], rel=1e-6)


def test_baselines_frozen(net, geo):
    t_ca, t_bh = baseline_rates(net, geo)
    gamma = (1 - math.exp(-net.eta_u)) / net.eta_u
    assert t_ca == pytest.approx((net.W_m + net.W_d) * gamma * 2.148147, rel=1e-6)
    assert t_ca == pytest.approx(1.0740733e6, rel=1e-7)
    assert t_bh == pytest.approx(net.beta * t_ca, rel=1e-15)


@given(st.floats(0, 1e4))
@settings(max_examples=60, deadline=None)
def test_bandwidth_share(a):
    g = bandwidth_share(a)
    assert 0 < g <= 1
    if a > 1e-6:
        assert g == pytest.approx(-math.expm1(-a) / a, rel=1e-12)


def test_user_loads_split_the_user_density(net, cache):
    for s in ("NS", "US"):
        d, m = user_loads(s, 3, net, cache)
        assert d + m == pytest.approx(net.eta_u, rel=1e-12) and d > 0 and m > 0


def test_overall_coverage_components(net, geo, cache):
    res = coverage_overall("NS", 1, 3, net, geo, cache)
    parts = res.components["cellular"] + sum(v for k, v in res.components.items() if k.startswith("d2d_"))
    assert res.value == pytest.approx(parts, rel=1e-14)
    mode = coverage_d2d_mode("NS", 1, 3, net, geo, cache)
    p = res.components["p_d2d"]
    assert res.value == pytest.approx((1 - p) * res.components["gamma_m"] + p * mode, rel=1e-12)


def test_bound_method_is_large_density_limit(net, cache):
    dense = replace(net, lambda_d=net.lambda_m * 5000)
    for s in ("NS", "US"):
        ex = coverage_overall(s, 5, 3, dense, None, cache).value
        bd = coverage_overall(s, 5, 3, dense, None, cache, method="bound").value
        assert ex == pytest.approx(bd, rel=1e-3)
        ex = avg_rate_overall(s, 5, 3, dense, None, cache).value
        bd = avg_rate_overall(s, 5, 3, dense, None, cache, method="bound").value
        assert ex == pytest.approx(bd, rel=1e-3)


def test_optimal_k_structure(net, geo, cache):
    for c in (1, 10, 100):
        assert optimal_k("coverage", "US", c, net, cache, geo)[0] == 1
        assert optimal_k("coverage", "NS", c, net, cache, geo)[0] == 2
    for zeta in (0.4, 1.2):
        cp = CacheParams(cache.L, zeta, cache.C_m, cache.C_d)
        assert optimal_k("coverage", "NS", 1, net, cp, geo)[0] == 2
    ks = [optimal_k("rate", "NS", c, net, cache, geo)[0] for c in (1, 10, 100)]
    assert ks == [1, 2, 5]


def test_gains_frozen(net, geo, cache):
    g = coverage_gain(1, net, geo, cache)
    assert g["NS"] == pytest.approx(593.6126, abs=1e-3)
    assert g["US"] == pytest.approx(561.3958, abs=1e-3)


def test_undefined_conditional_when_helpers_never_hold_content(net, geo):
    cp = CacheParams(L=100, zeta=0.8, C_m=1, C_d=0)
    with pytest.raises(UndefinedConditionalError):
        coverage_d2d_mode("NS", 3, 2, net, geo, cp)
    # the overall metric stays defined and falls back to cellular
    assert coverage_overall("NS", 3, 2, net, geo, cp).value == pytest.approx(coverage_cellular(net), rel=1e-14)


@pytest.mark.parametrize("field,value", [("alpha", 2.0), ("alpha", 5.5), ("beta", 1.5), ("sigma2", -1.0),
                                         ("lambda_m", 0.0)])
def test_network_param_validation(net, field, value):
    with pytest.raises(DomainError):
        replace(net, **{field: value})
