import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2d_offload.content import CacheParams, hit_d2d
from d2d_offload.errors import DomainError
from d2d_offload.modes import (
    SelectionScheme,
    cell_helper_count_pmf,
    helper_count_sf,
    helper_count_sf_closed,
    interferer_presence_prob,
    mode_profile,
    p_d2d_bound,
    p_d2d_mode,
    p_d2d_mode_all_contents,
    p_served_by_ith,
)

etas = st.floats(0.05, 2000.0)
ks = st.integers(1, 12)
schemes = st.sampled_from(["NS", "US"])


def test_scheme_parsing():
    assert SelectionScheme.parse("ns") is SelectionScheme.NS
    assert SelectionScheme.parse(SelectionScheme.US) is SelectionScheme.US
    with pytest.raises((DomainError, ValueError)):
        SelectionScheme.parse("XS")


@pytest.mark.parametrize("eta", [0.1, 1.0, 10.0, 300.0])
def test_helper_pmf_sums_to_one_with_mean_eta(eta):
    j = np.arange(0, 40000)
    p = cell_helper_count_pmf(j, eta)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-10)
    assert math.fsum(j * p) == pytest.approx(eta, rel=1e-8)


def test_presence_probability_frozen():
    # 1 - (1 + 10/3.5)^-3.5 at eta = 10
    assert interferer_presence_prob(10.0) == pytest.approx(1 - (1 + 10 / 3.5) ** -3.5, rel=1e-15)
    assert interferer_presence_prob(10.0) == pytest.approx(0.9911270, rel=1e-7)
    assert helper_count_sf(1, 10.0) == pytest.approx(interferer_presence_prob(10.0), rel=1e-12)


@given(st.integers(1, 30), etas)
@settings(max_examples=80, deadline=None)
def test_sf_closed_form_matches_tail_sum(i, eta):
    assert helper_count_sf_closed(i, eta) == pytest.approx(helper_count_sf(i, eta), rel=1e-9, abs=1e-300)


@given(schemes, ks, etas, st.integers(1, 500))
@settings(max_examples=80, deadline=None)
def test_mode_profile_is_a_distribution(s, k, eta, c):
    cp = CacheParams(L=500, zeta=0.8, C_m=1, C_d=20)
    prof = mode_profile(s, c, k, eta, cp)
    assert all(p >= 0 for p in prof.per_helper)
    assert prof.d2d_total + prof.cellular == pytest.approx(1.0, abs=1e-14)
    assert 0.0 <= prof.d2d_total <= hit_d2d(c, cp) * (1 + 1e-12) or s == "NS"
    assert prof.d2d_total <= 1.0


@given(schemes, ks, etas, st.integers(1, 500))
@settings(max_examples=60, deadline=None)
def test_closed_and_tail_per_helper_agree(s, k, eta, c):
    cp = CacheParams(L=500, zeta=0.8, C_m=1, C_d=20)
    for i in range(1, k + 1):
        a = p_served_by_ith(s, i, c, k, eta, cp)
        b = p_served_by_ith(s, i, c, k, eta, cp, method="closed")
        assert a == pytest.approx(b, rel=1e-8, abs=1e-300)


@given(st.integers(1, 500), etas)
@settings(max_examples=60, deadline=None)
def test_us_mode_probability_constant_in_k(c, eta):
    cp = CacheParams(L=500, zeta=0.8, C_m=1, C_d=20)
    vals = [math.fsum(p_served_by_ith("US", i, c, k, eta, cp) for i in range(1, k + 1)) for k in range(1, 9)]
    assert max(vals) - min(vals) <= 1e-12
    assert vals[0] == pytest.approx(p_d2d_mode("US", c, 3, eta, cp), abs=1e-12)


@given(st.integers(1, 500), etas, st.integers(1, 11))
@settings(max_examples=60, deadline=None)
def test_ns_mode_probability_nondecreasing_in_k(c, eta, k):
    cp = CacheParams(L=500, zeta=0.8, C_m=1, C_d=20)
    assert p_d2d_mode("NS", c, k + 1, eta, cp) >= p_d2d_mode("NS", c, k, eta, cp)


@given(st.integers(1, 500), etas, ks)
@settings(max_examples=60, deadline=None)
def test_ns_bound_dominates(c, eta, k):
    cp = CacheParams(L=500, zeta=0.8, C_m=1, C_d=20)
    for i in range(1, k + 1):
        assert p_served_by_ith("NS", i, c, k, eta, cp) <= p_d2d_bound("NS", i, c, k, cp) * (1 + 1e-12)


def test_bound_is_the_dense_limit(cache):
    for s in ("NS", "US"):
        for i in range(1, 5):
            exact = p_served_by_ith(s, i, 3, 4, 1e4, cache)
            assert exact == pytest.approx(p_d2d_bound(s, i, 3, 4, cache), rel=2e-3)


def test_us_per_helper_limit_is_not_a_finite_density_bound(cache):
    # with few helpers the nearest one is drawn more often than 1/k
    assert p_served_by_ith("US", 1, 1, 4, 1.0, cache) > p_d2d_bound("US", 1, 1, 4, cache)


def test_table1_mode_probabilities_frozen(cache):
    # NS, c = 1, eta = 10 against the tail sums recomputed with plain floats
    h = hit_d2d(1, cache)
    want = 0.0
    for i in range(1, 5):
        j = np.arange(i, 5000)
        sf = math.fsum(cell_helper_count_pmf(j, 10.0))
        want += sf * (1 - h) ** (i - 1) * h
    assert p_d2d_mode("NS", 1, 4, 10.0, cache) == pytest.approx(want, rel=1e-12)
    assert p_d2d_mode("NS", 1, 4, 10.0, cache) == pytest.approx(0.92291, abs=5e-5)
    assert p_d2d_mode("US", 1, 4, 10.0, cache) == pytest.approx(0.52373, abs=5e-5)


def test_vectorized_over_contents(cache):
    allc = p_d2d_mode_all_contents("NS", 3, 10.0, cache)
    for c in (1, 17, 5000):
        assert allc[c - 1] == pytest.approx(p_d2d_mode("NS", c, 3, 10.0, cache), rel=1e-12)
    allu = p_d2d_mode_all_contents("US", 3, 10.0, cache)
    assert allu[9] == pytest.approx(p_d2d_mode("US", 10, 3, 10.0, cache), rel=1e-12)


@pytest.mark.parametrize("args", [(0, 3), (4, 3), (1.5, 3)])
def test_helper_order_validation(cache, args):
    i, k = args
    with pytest.raises((DomainError, IndexError)):
        p_served_by_ith("NS", i, 1, k, 10.0, cache)


@pytest.mark.parametrize("eta", [0.0, -1.0, math.inf, math.nan])
def test_eta_validation(cache, eta):
    with pytest.raises(DomainError):
        p_d2d_mode("NS", 1, 2, eta, cache)
