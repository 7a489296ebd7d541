import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epgig.distributions import CLOSED_FORMS, PriorSpec, epgig_log_density
from epgig.weights import (
    WeightContext,
    bridge_prior_weight,
    estep_weight,
    jeffreys_weight,
    monotonicity_violations,
    penalty_value,
    reweight_omega,
    split_pinned,
)


def test_estep_examples():
    assert estep_weight(3.0, WeightContext(PriorSpec.generic(4, 1, 1.5, 1))) == pytest.approx(1.0, abs=1e-15)
    assert estep_weight(1.0, WeightContext(PriorSpec.gamma_mixing(1, 0.5, 1))) == pytest.approx(2.0, abs=1e-15)
    assert estep_weight(0.0, WeightContext(PriorSpec.generic(9, 1, 1, 2))) == pytest.approx(3.0, abs=1e-15)


def test_estep_pinned_at_zero():
    w = estep_weight(0.0, WeightContext(PriorSpec.gamma_mixing(1, 0.5, 1)))
    assert w == np.inf
    vals, pinned = split_pinned([1.0, np.inf, 0.5])
    assert pinned.tolist() == [False, True, False]
    assert np.all(np.isfinite(vals)) and vals[1] == 0.0
    # gamma posterior with order > 1 keeps a finite weight at zero
    assert np.isfinite(estep_weight(0.0, WeightContext(PriorSpec.gamma_mixing(2.0, 3.0, 1))))


def mp_weight(s, prior, sigma=1.0, size=1):
    nu = (prior.gamma * prior.q - size) / prior.q
    t = prior.beta + s / sigma
    x = mpmath.sqrt(prior.alpha * t)
    return float(mpmath.sqrt(prior.alpha / t) * mpmath.besselk(nu - 1, x) / mpmath.besselk(nu, x))


@pytest.mark.parametrize("gam,q", [(0.3, 1), (2.7, 1), (-1.2, 2), (0.8, 0.5), (4.0, 2)])
def test_estep_matches_mpmath(gam, q):
    prior = PriorSpec.generic(1.4, 0.6, gam, q)
    for s in (0.0, 0.3, 2.0, 15.0):
        for sigma in (0.5, 2.0):
            got = estep_weight(s, WeightContext(prior, sigma))
            assert got == pytest.approx(mp_weight(s, prior, sigma), rel=1e-11)


def test_estep_grouped_matches_mpmath():
    prior = PriorSpec.generic(1.4, 0.6, 2.2, 1)
    for size in (2, 3, 5):
        got = estep_weight(1.7, WeightContext(prior, 1.3, size))
        assert got == pytest.approx(mp_weight(1.7, prior, 1.3, size), rel=1e-11)


def test_closed_forms_agree_with_bessel_path():
    rng = np.random.default_rng(3)
    # posterior orders 1/2, -1/2, -3/2 reached from singleton and grouped contexts
    cases = [(1.5, 1, 1), (0.5, 1, 1), (1.0, 2, 1), (0.0, 2, 1), (-0.5, 1, 1), (-1.0, 2, 1),
             (2.5, 1, 2), (1.5, 1, 2), (3.5, 1, 3), (1.5, 2, 2)]
    for k in range(100):
        gam, q, size = cases[k % len(cases)]
        prior = PriorSpec.generic(rng.uniform(0.05, 10), rng.uniform(0.05, 10), gam, q)
        ctx = WeightContext(prior, rng.uniform(0.2, 5), size)
        assert abs(ctx.order) in (0.5, 1.5)
        s = rng.exponential(3.0)
        fast, slow = estep_weight(s, ctx), estep_weight(s, ctx, closed_form=False)
        assert abs(fast - slow) <= 1e-10 * slow


def test_jeffreys_examples():
    assert jeffreys_weight(0.5, 1, 1) == pytest.approx(4.0)
    assert jeffreys_weight(1.0, 2, 1) == pytest.approx(1.0)
    assert jeffreys_weight(2.0, 1, 3) == pytest.approx(3.0)
    assert jeffreys_weight(0.0, 1) == np.inf


def test_bridge_examples():
    assert bridge_prior_weight(1.0, 4, 1) == pytest.approx(2.0)
    assert bridge_prior_weight(4.0, 4, 1) == pytest.approx(1.0)
    assert bridge_prior_weight(0.25, 1, 1) == pytest.approx(2.0)
    assert bridge_prior_weight(0.0, 1) == np.inf


def test_bridge_weight_is_estep_of_gamma_mixing():
    # gamma mixing with gamma = 3/2, q = 1 has posterior order 1/2: sqrt(alpha sigma / |b|)
    prior = PriorSpec.gamma_mixing(2.3, 1.5, 1)
    for b, sigma in ((0.4, 1.0), (3.0, 0.7)):
        assert bridge_prior_weight(b, 2.3, sigma) == pytest.approx(estep_weight(b, WeightContext(prior, sigma)))


def test_jeffreys_weight_is_estep_of_jeffreys_prior():
    for q in (1.0, 2.0):
        for b in (0.3, 2.0):
            got = estep_weight(abs(b) ** q, WeightContext(PriorSpec.jeffreys(q), 1.7))
            assert got == pytest.approx(jeffreys_weight(b, q, 1.7), rel=1e-14)


def test_penalty_examples():
    for prior in (PriorSpec.generic(1, 1, 0.5, 1), PriorSpec.generalized_t(1, 1, 1), PriorSpec.generic(1, 1, 1, 2)):
        assert penalty_value(0.0, prior) == 0.0
    b = np.linspace(-6, 6, 25)
    assert np.allclose(penalty_value(b, PriorSpec.gamma_mixing(1, 1.5, 1)), np.sqrt(np.abs(b)), atol=1e-13)
    j = PriorSpec.jeffreys(1)
    assert penalty_value(2.0, j) == pytest.approx(math.log(2.0))
    assert penalty_value(2.0, j, b_ref=4.0) == pytest.approx(math.log(0.5))
    eg = PriorSpec.gamma_mixing(1, 0.5, 1)
    assert penalty_value(1.0, eg) == pytest.approx(-epgig_log_density(1.0, eg))


def test_omega_example():
    assert reweight_omega(3.0, PriorSpec.generic(4, 1, 1.5, 1)) == pytest.approx(0.5, abs=1e-15)


def _random_prior(rng):
    q = rng.choice([0.5, 1.0, 2.0])
    return PriorSpec.generic(rng.uniform(0.2, 4), rng.uniform(0.2, 4), rng.uniform(-2, 3), q)


def test_omega_is_derivative_of_penalty():
    rng = np.random.default_rng(11)
    for _ in range(20):
        prior = _random_prior(rng)
        b = rng.uniform(0.1, 5)
        s = b**prior.q
        h = 1e-5 * max(1.0, s)
        neg = lambda u: -epgig_log_density(u ** (1 / prior.q), prior)  # noqa: E731
        fd = (neg(s + h) - neg(s - h)) / (2 * h)
        om = reweight_omega(b, prior)
        assert abs(om - fd) / om <= 1e-5


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-2, 3), st.sampled_from([0.5, 1.0, 2.0]),
       st.floats(0, 6), st.floats(0.2, 5))
def test_two_sigma_omega_equals_weight(alpha, beta, gam, q, b, sigma):
    # the sigma-scaled prior EGIG(alpha/sigma, beta sigma) linearizes the E-step weight
    scaled = PriorSpec.generic(alpha / sigma, beta * sigma, gam, q)
    w = estep_weight(b**q, WeightContext(PriorSpec.generic(alpha, beta, gam, q), sigma))
    assert abs(2 * sigma * reweight_omega(b, scaled) - w) <= 1e-12 * max(1.0, w)


def _appendix_priors(qs):
    return [PriorSpec.generic(1.0, 1.0, g, q) for g, q in CLOSED_FORMS if q in qs]


@pytest.mark.parametrize("prior", _appendix_priors((0.5, 1.0)), ids=lambda p: f"g{p.gamma}q{p.q}")
def test_penalty_concave_for_small_q(prior):
    b = np.logspace(-3, 1.5, 300)
    # second differences on a nonuniform grid: compare slopes of consecutive chords
    pen = penalty_value(b, prior)
    slope = np.diff(pen) / np.diff(b)
    assert np.all(np.diff(slope) <= 1e-12 * np.maximum(1.0, np.abs(slope[1:])))


@pytest.mark.parametrize("prior", _appendix_priors((0.5, 1.0, 2.0)) + [PriorSpec.generalized_t(1, 1, 1),
                                                                       PriorSpec.gamma_mixing(1, 1.5, 1)])
def test_weight_positive_and_nonincreasing(prior):
    s = np.linspace(0.0, 50.0, 501)
    w = estep_weight(s, WeightContext(prior))
    assert np.all(w > 0)
    assert np.all(np.diff(w[np.isfinite(w)]) <= 0)
    assert np.all(np.diff(reweight_omega(np.sqrt(s[1:]), prior)) <= 0)


def test_monotonicity_violations_zero_on_roster():
    rng = np.random.default_rng(5)
    priors = _appendix_priors((0.5, 1.0, 2.0)) + [_random_prior(rng) for _ in range(10)]
    for prior in priors:
        assert sum(monotonicity_violations(prior).values()) == 0


def test_context_validation():
    prior = PriorSpec.generic(1, 1, 1, 1)
    with pytest.raises(ValueError):
        WeightContext(prior, sigma=0.0)
    with pytest.raises(ValueError):
        WeightContext(prior, group_size=0)
    with pytest.raises(ValueError):
        estep_weight(-1.0, WeightContext(prior))
    assert WeightContext(prior, group_size=3).order == -2.0
