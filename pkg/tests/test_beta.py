import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from divctl.beta import (
    BetaCurve,
    NoRegimeBoundary,
    beta_of_t,
    beta_smalltime_constant,
    beta_smalltime_ratio,
    solve_delta0,
)
from divctl.model import ModelParams, solve_barrier

P0 = ModelParams(mu=0.5, sigma=1.0, rho=0.25, K=0.0)


def test_beta_matches_quadrature_finite_differences():
    t = 1.0
    sol = solve_barrier(P0)
    hx = oracles.forward_derivative_at_zero(lambda x: oracles.h_by_quadrature(0.5, 1.0, x, t), 0.0, 2e-3)
    px = oracles.forward_derivative_at_zero(lambda x: oracles.p_by_quadrature(0.5, 1.0, x, t), 1.0, 2e-3)
    expected = (hx - math.exp(P0.rho * t) * sol.slope_at_zero) / px
    assert beta_of_t(P0, t) == pytest.approx(expected, rel=1e-6)


def test_curve_increasing_and_positive():
    curve = BetaCurve(P0)
    assert curve.t[0] == pytest.approx(1e-6) and curve.t[-1] == pytest.approx(1e2) and curve.t.size == 40
    assert curve.strictly_increasing
    assert curve.positive


@given(
    st.floats(min_value=0.05, max_value=2.0),
    st.floats(min_value=0.2, max_value=2.0),
    st.floats(min_value=0.02, max_value=1.0),
    st.floats(min_value=1e-5, max_value=20.0),
    st.floats(min_value=1.001, max_value=10.0),
)
@settings(max_examples=200, deadline=None)
def test_monotone_pairs(mu, sig, rho, t1, factor):
    p = ModelParams(mu, sig, rho)
    assert 0.0 < beta_of_t(p, t1) < beta_of_t(p, t1 * factor)


def test_limits():
    assert beta_of_t(P0, 1e-12) < 1e-5
    assert beta_of_t(P0, 1e3) > 1e2


def test_small_time_ratio_schedule():
    ratios = [beta_smalltime_ratio(P0, t) for t in (1e-2, 1e-4, 1e-6)]
    gaps = [abs(r - 1) for r in ratios]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 0.05
    assert abs(beta_smalltime_ratio(P0, 10.0) - 1.0) > 0.5


def test_small_time_constant_value():
    sol = solve_barrier(P0)
    assert beta_smalltime_constant(P0) == pytest.approx((sol.slope_at_zero - 1) * math.sqrt(math.pi / 2), rel=1e-15)


def test_delta0_matches_bisection():
    sol = solve_barrier(P0)
    target = P0.payout_level - P0.K - sol.u0
    ref = oracles.bisect_increasing(lambda t: beta_of_t(P0, t), target, 1e-8, 100.0, tol=1e-14)
    d0 = solve_delta0(P0)
    assert d0 == pytest.approx(ref, rel=1e-10)
    assert abs(beta_of_t(P0, d0) - target) <= 1e-8 * P0.payout_level


def test_delta0_shrinks_as_cost_approaches_gap():
    sol = solve_barrier(P0)
    gap = P0.payout_level - sol.u0
    d = [solve_delta0(P0.replace(K=gap * (1 - eps))) for eps in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(d, d[1:]))
    assert d[-1] < 1e-6


def test_delta0_unavailable_for_large_cost():
    sol = solve_barrier(P0)
    with pytest.raises(NoRegimeBoundary):
        solve_delta0(P0.replace(K=P0.payout_level - sol.u0))


def test_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        beta_of_t(P0, 0.0)
