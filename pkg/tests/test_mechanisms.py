import math

import mpmath
import numpy as np
import pytest

from hsa.mechanisms import (NumericalError, RdpCurve, gaussian_rdp, rdp_to_dp,
                            sgm_renyi, sgm_small_q_heuristic, sgm_table)


def _sgm_mpmath(alpha, q, sigma):
    mpmath.mp.dps = 30
    a, q, s = mpmath.mpf(alpha), mpmath.mpf(q), mpmath.mpf(sigma)

    def f(x):
        mu = mpmath.npdf(x, 0, s)
        nu = (1 - q) * mu + q * mpmath.npdf(x, 1, s)
        return mu ** a * nu ** (1 - a)

    lo, hi = -40 * s - a, 1 + 40 * s
    I = mpmath.quad(f, mpmath.linspace(lo, hi, 80))
    return float(mpmath.log(I) / (a - 1))


def test_gaussian_rdp():
    assert gaussian_rdp(2, 0, 1) == 0
    assert gaussian_rdp(2, 1, 1) == 1.0
    assert gaussian_rdp(3, 0.5, 2) == pytest.approx(3 * 0.25 / 8)
    for bad in [(1.0, 1, 1), (2, -1, 1), (2, 1, 0)]:
        with pytest.raises(ValueError):
            gaussian_rdp(*bad)


def test_sgm_endpoints_exact():
    assert sgm_renyi(2.0, 0.0, 1.0) == 0.0
    assert sgm_renyi(2.0, 1.0, 1.0) == 1.0
    assert sgm_renyi(7.5, 1.0, 0.3) == gaussian_rdp(7.5, 1.0, 0.3)


@pytest.mark.parametrize("alpha, q, sigma", [
    (2.0, 0.2, 2.0), (2.0, 0.2, 1.0), (8.0, 0.05, 0.7), (1.5, 0.5, 4.0),
    (32.0, 0.01, 2.0), (3.3, 0.9, 0.5),
])
def test_sgm_against_independent_quadrature(alpha, q, sigma):
    v = sgm_renyi(alpha, q, sigma)
    assert v == pytest.approx(_sgm_mpmath(alpha, q, sigma), rel=1e-9)
    assert v == pytest.approx(sgm_renyi(alpha, q, sigma, resolution=4.0), rel=1e-10)


def test_sgm_monte_carlo_importance_sampling():
    # draw from mu and average (mu/nu)^(alpha-1); alpha=2 keeps the variance finite
    alpha, q, sigma = 2.0, 0.2, 2.0
    rng = np.random.default_rng(0)
    x = rng.normal(0.0, sigma, 2_000_000)
    log_ratio = -np.logaddexp(math.log1p(-q), math.log(q) + (2 * x - 1) / (2 * sigma ** 2))
    w = np.exp((alpha - 1) * log_ratio)
    est, se = w.mean(), w.std() / math.sqrt(w.size)
    v = sgm_renyi(alpha, q, sigma)
    assert abs(math.exp(v) - est) <= 5 * se


def test_sgm_invariant_to_window_and_nodes():
    for args in [(2.0, 0.2, 2.0), (16.0, 0.3, 1.0), (4.0, 0.7, 0.5)]:
        v = sgm_renyi(*args)
        assert sgm_renyi(*args, radius_scale=2.0) == pytest.approx(v, rel=1e-9, abs=1e-300)
        assert sgm_renyi(*args, resolution=2.0) == pytest.approx(v, rel=1e-9, abs=1e-300)


def test_sgm_dominated_by_full_shift():
    for a in (1.5, 2, 10):
        for s in (0.5, 1, 3):
            for q in np.linspace(0, 1, 7):
                assert sgm_renyi(a, q, s) <= gaussian_rdp(a, 1, s) * (1 + 1e-12)


def test_sgm_tiny_noise_limit_is_finite():
    # as sigma -> 0 the mixture separates and S -> log(1/(1-q))
    v = sgm_renyi(2.0, 0.2, 0.02)
    assert v == pytest.approx(-math.log(0.8), rel=1e-6)


def test_sgm_errors_and_heuristic():
    with pytest.raises(ValueError):
        sgm_renyi(1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        sgm_renyi(2.0, 1.5, 1.0)
    with pytest.raises(ValueError):
        sgm_renyi(2.0, 0.5, 0.0)
    with pytest.raises(NumericalError) as e:
        sgm_renyi(2.0, 0.3, 1.0, radius_scale=0.05, max_widenings=0)
    assert e.value.error_estimate > 0
    assert sgm_small_q_heuristic(2, 0.1, 1) == pytest.approx(0.04)


def test_sgm_table():
    t = sgm_table(2.0, 0.2, [0.0, 1.0, 2.0])
    assert math.isinf(t[0]) and t[1] > t[2] > 0


def test_rdp_to_dp():
    eps, a = rdp_to_dp(RdpCurve(((2.0, 1.0),)), 1e-5)
    assert eps == pytest.approx(1 + math.log(1e5)) and a == 2.0
    assert eps == pytest.approx(12.5129, abs=1e-4)
    # one point dominates
    curve = RdpCurve(((2.0, 1.0), (4.0, 0.5)))
    assert rdp_to_dp(curve, 1e-5)[1] == 4.0
    # crossover: the smaller conversion wins
    curve = RdpCurve(((2.0, 0.1), (8.0, 5.0)))
    for delta in (0.5, 1e-12):
        expect = min(0.1 + math.log(1 / delta), 5.0 + math.log(1 / delta) / 7)
        assert rdp_to_dp(curve, delta)[0] == pytest.approx(expect)


def test_rdp_curve_validation():
    with pytest.raises(ValueError):
        rdp_to_dp(RdpCurve(()), 1e-5)
    with pytest.raises(ValueError):
        RdpCurve(((2.0, 1.0), (2.0, 1.0)))
    with pytest.raises(ValueError):
        RdpCurve(((0.5, 1.0),))
    with pytest.raises(ValueError):
        rdp_to_dp(RdpCurve(((2.0, 1.0),)), 1.0)
    c = RdpCurve.from_arrays([2, 3], [0.1, 0.2])
    assert list(c.alphas) == [2, 3] and list(c.epsilons) == [0.1, 0.2]
