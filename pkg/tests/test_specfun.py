import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epgig.specfun import bessel_k_ratio, bessel_ratio_q, is_half_integer, log_bessel_k, log_gamma


def mp_log_k(nu, x):
    return float(mpmath.log(mpmath.besselk(nu, x)))


def test_half_integer_values():
    assert log_bessel_k(0.5, 1.0) == pytest.approx(math.log(math.sqrt(math.pi / 2) * math.exp(-1)), abs=1e-14)
    # K_{3/2}(1) = 2 K_{1/2}(1)
    assert log_bessel_k(1.5, 1.0) == pytest.approx(math.log(2 * 0.46106850444789454), abs=1e-14)
    assert log_bessel_k(1.5, 1.0) == pytest.approx(-0.0810614667953271, abs=1e-14)


def test_order_one_matches_integral_representation():
    # K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, evaluated independently
    with mpmath.workdps(30):
        ref = mpmath.quad(lambda t: mpmath.exp(-mpmath.cosh(t)) * mpmath.cosh(t), [0, 1, 2, 4, 8])
    assert float(ref) == pytest.approx(0.6019072301972346, rel=1e-14)
    assert math.exp(log_bessel_k(1.0, 1.0)) == pytest.approx(float(ref), rel=1e-13)


@pytest.mark.parametrize("nu", [-3.7, -1.2, -0.5, 0.0, 0.3, 0.5, 1.0, 2.5, 7.25, 40.0])
@pytest.mark.parametrize("x", [1e-8, 1e-3, 0.5, 1.999, 2.0, 7.0, 80.0, 1e4])
def test_against_mpmath(nu, x):
    ref = mp_log_k(nu, x)
    assert log_bessel_k(nu, x) == pytest.approx(ref, rel=1e-13, abs=1e-13)


def test_vectorized_and_extreme_arguments():
    x = np.array([1e-10, 1.0, 1e3, 1e8])
    out = log_bessel_k(2.3, x)
    assert out.shape == (4,) and np.all(np.isfinite(out))
    assert out[-1] == pytest.approx(mp_log_k(2.3, 1e8), rel=1e-13)
    assert np.isfinite(log_bessel_k(1e4, 1.0))
    assert log_bessel_k(1e3, 5.0) == pytest.approx(mp_log_k(1000, 5.0), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_domain_errors(bad):
    with pytest.raises(ValueError):
        log_bessel_k(1.0, bad)
    with pytest.raises(ValueError):
        bessel_ratio_q(1.0, bad)
    with pytest.raises(ValueError):
        log_gamma(bad)


def test_half_integer_detection():
    assert is_half_integer(2.5) and is_half_integer(-0.5)
    assert is_half_integer(0.5 + 1e-13)
    assert not is_half_integer(0.5 + 1e-9) and not is_half_integer(1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-8, 8), st.floats(1e-3, 200))
def test_symmetry_in_order(nu, x):
    assert abs(log_bessel_k(nu, x) - log_bessel_k(-nu, x)) <= 1e-12 * max(1.0, abs(log_bessel_k(nu, x)))


def test_recurrence_residual():
    eps = np.finfo(float).eps
    for nu in np.linspace(-5, 5, 41):
        x = np.logspace(-2, 2, 40)
        lp, l0, lm = (log_bessel_k(v, x) for v in (nu + 1, nu, nu - 1))
        kp, k0, km = np.exp(lp), np.exp(l0), np.exp(lm)
        resid = np.abs(kp - 2 * nu / x * k0 - km) / kp
        # a double holding ln K has absolute error ~ eps |ln K|, i.e. relative error
        # eps |ln K| in K; the recurrence amplifies it by the size of each term
        floor = 4 * eps * (np.abs(l0) * np.abs(2 * nu / x) * k0 + np.abs(lm) * km + np.abs(lp) * kp) / kp
        assert np.all(resid <= 1e-10 + floor)
        if nu >= 0:
            assert resid.max() <= 1e-10


def test_large_argument_asymptote():
    # Hankel expansion: K_nu(x) sqrt(2x/pi) e^x = 1 + (4nu^2-1)/(8x) + O(x^-2)
    for nu in [0.0, 0.5, 0.7, 2.0, 4.5]:
        x = np.linspace(50, 500, 50)
        ratio = np.exp(log_bessel_k(nu, x) - 0.5 * np.log(np.pi / (2 * x)) + x)
        m = 4 * nu * nu
        second = np.abs((m - 1) * (m - 9)) / (2 * (8 * x) ** 2)
        assert np.all(np.abs(ratio - 1 - (m - 1) / (8 * x)) <= 1.5 * second + 1e-13)


def test_q_examples():
    assert bessel_ratio_q(0.5, 4.0) == pytest.approx(0.5, rel=1e-15)
    assert bessel_ratio_q(-0.5, 1.0) == pytest.approx(2.0, rel=1e-15)
    ref = float(mpmath.besselk(0, 1) / mpmath.besselk(1, 1))
    assert ref == pytest.approx(0.6994839, abs=5e-8)
    assert bessel_ratio_q(1.0, 1.0) == pytest.approx(ref, rel=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(-6, 6), st.floats(1e-4, 1e3))
def test_ratio_matches_mpmath(nu, x):
    ref = float(mpmath.besselk(nu - 1, x) / mpmath.besselk(nu, x))
    assert bessel_k_ratio(nu, x) == pytest.approx(ref, rel=1e-12)


def test_q_completely_monotone_signs():
    rng = np.random.default_rng(11)
    z = np.logspace(-3, 3, 300)
    for nu in rng.uniform(-3, 3, 20):
        qv = bessel_ratio_q(nu, z)
        assert np.all(qv > 0)
        d1 = np.diff(qv) / np.diff(z)
        d2 = np.diff(d1)
        assert np.all(d1 <= 1e-12 * np.abs(qv[:-1]))
        assert np.all(d2 >= -1e-12 * np.abs(d1[:-1]))


def test_log_gamma():
    assert log_gamma(1.0) == 0.0
    assert log_gamma(0.5) == pytest.approx(0.5723649429247001, rel=1e-15)
    assert log_gamma(1.5) == pytest.approx(-0.12078223763524522, rel=1e-14)
    for x in np.logspace(-3, 3, 25):
        assert log_gamma(x) == pytest.approx(float(mpmath.loggamma(x)), rel=1e-12, abs=1e-15)
