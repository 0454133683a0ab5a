import math
from dataclasses import replace

import numpy as np
import pytest

from d2d_offload.errors import ConfigError, DomainError, InsufficientSamplesError
from d2d_offload.montecarlo import (
    SimConfig,
    TrialOutcome,
    block_rng,
    cellular_sinr_samples,
    conditional_distance_histogram,
    distance_samples,
    estimate,
    helper_count_samples,
    histogram_l1,
    mode_probabilities,
    run_trial,
)
from d2d_offload.modes import p_d2d_mode
from d2d_offload.performance import coverage_cellular


def test_block_streams_are_reproducible_and_distinct():
    a = block_rng(7, 3).random(5)
    assert np.array_equal(a, block_rng(7, 3).random(5))
    assert not np.array_equal(a, block_rng(7, 4).random(5))
    assert not np.array_equal(a, block_rng(8, 3).random(5))


@pytest.mark.parametrize("kw", [dict(trials=0), dict(window_factor=2.0), dict(edge_policy="reflect"),
                                dict(block_size=0), dict(workers=0), dict(us_variant="x"), dict(seed=-1)])
def test_sim_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_results_independent_of_worker_count(net):
    base = SimConfig(trials=900, seed=5, block_size=128)
    one = cellular_sinr_samples(net, base)
    two = cellular_sinr_samples(net, replace(base, workers=2))
    assert np.array_equal(one, two)


def test_results_depend_on_block_size_only_through_layout(net):
    a = estimate("p-in", net, SimConfig(trials=1000, seed=1, block_size=100))
    b = estimate("p-in", net, SimConfig(trials=1000, seed=1, block_size=100))
    assert a == b


def test_strict_minimum_and_small_runs(net):
    with pytest.raises(InsufficientSamplesError):
        estimate("p-in", net, SimConfig(trials=50, seed=1))
    e = estimate("p-in", net, SimConfig(trials=1, seed=1), strict=False)
    assert e.trials == 1 and math.isinf(e.ci_halfwidth)


def test_user_inside_disk_probability_is_one_quarter(net):
    # X and Y are dependent in the actual tessellation; the joint law gives 1/4
    e = estimate("p-in", net, SimConfig(trials=20_000, seed=2))
    assert abs(e.mean - 0.25) < 2.0 * e.ci_halfwidth + 1e-3
    assert abs(e.mean - 0.2) > 3 * e.ci_halfwidth


def test_cellular_coverage_matches_analytic(net):
    for tau_db in (0.0, 10.0):
        tau = 10 ** (tau_db / 10)
        e = estimate("coverage-cellular", net, SimConfig(trials=20_000, seed=3), tau=tau)
        assert abs(e.mean - coverage_cellular(net, tau=tau)) < max(0.01, e.ci_halfwidth)


def test_us_mode_probability_matches_closed_form(net, cache):
    est = mode_probabilities(net, cache, [("US", 1, 1), ("US", 1, 4)], SimConfig(trials=20_000, seed=4))
    want = p_d2d_mode("US", 1, 1, net.eta, cache)
    for e in est:
        assert abs(e.mean - want) < 1.5 * e.ci_halfwidth + 5e-3


def test_helper_count_is_size_biased(net):
    # the user's cell is larger than a typical cell
    user = helper_count_samples(net, SimConfig(trials=4000, seed=6))
    mbs = helper_count_samples(net, SimConfig(trials=4000, seed=6), anchor="mbs")
    assert np.mean(mbs) == pytest.approx(net.eta, rel=0.08)
    assert np.mean(user) > 1.15 * np.mean(mbs)
    with pytest.raises(DomainError):
        helper_count_samples(net, SimConfig(trials=10), anchor="edge")


def test_single_trial_outcome(net, cache):
    out = run_trial(block_rng(1, 0), net, cache, "NS", 1, 2, SimConfig())
    assert isinstance(out, TrialOutcome)
    assert out.mode in ("cellular", "d2d(1)", "d2d(2)", "discarded")


def test_distance_histogram_bookkeeping(net):
    cfg = SimConfig(trials=3000, seed=8)
    x = distance_samples(net, cfg, imax=3)
    for i in (1, 3):
        h = conditional_distance_histogram(i, net, cfg, samples=x)
        assert h.retained_true + h.fewer_than_i + h.edge_discarded == h.total == 3000
        assert h.retained_disk + h.outside_bmax + h.fewer_in_bmax + h.edge_discarded == h.total
        assert np.sum(h.true_density * np.diff(h.edges)) == pytest.approx(0.999, abs=2e-3)
    with pytest.raises(DomainError):
        conditional_distance_histogram(4, net, cfg, samples=x)


def test_histogram_l1_is_zero_for_the_exact_law():
    edges = np.linspace(0, 5, 51)
    cdf = lambda e: -np.expm1(-np.asarray(e))  # noqa: E731
    dens = np.diff(cdf(edges)) / np.diff(edges)
    assert histogram_l1(edges, dens, cdf) == pytest.approx(0.0, abs=1e-14)
    assert histogram_l1(edges, np.zeros(50), cdf) == pytest.approx(2 * (1 - math.exp(-5)), rel=1e-12)


def test_toroidal_policy_runs(net):
    e = estimate("coverage-cellular", net, SimConfig(trials=500, seed=9, edge_policy="toroidal"))
    assert 0 <= e.mean <= 1


def test_unknown_observable(net):
    with pytest.raises(DomainError):
        estimate("latency", net, SimConfig(trials=200))
