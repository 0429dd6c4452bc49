import csv
import math

import numpy as np
import pytest

from divctl import passage
from divctl.heatlab import (
    GapFunction,
    InstabilityDetected,
    Profile,
    beta_ramp_function,
    bump_function,
    check_interval_positivity,
    check_nondegenerate_crossing,
    check_single_crossing,
    convergence_order,
    crossing_report,
    default_grid,
    evolve,
    evolve_samples,
    hitting_prob_function,
    positive_curvature_set,
    positive_set_report,
    random_bump_family,
    random_one_crossing_family,
    scale_function,
    sign_changes,
    slope_sign_pattern,
    touch_curvature,
    uniform_grid,
    write_reports_csv,
)
from divctl.model import ModelParams, solve_barrier
from divctl.thresholds import solve_fixed_point

P = ModelParams(mu=0.5, sigma=1.0, rho=0.25, K=0.2, Delta=0.05)
U0 = solve_barrier(P).u0
SAMPLES = np.linspace(0.05, 2.0, 12)


@pytest.fixture(scope="module")
def gap():
    ts = solve_fixed_point(P)
    return GapFunction(P, ts.beta_star, ts.u2), ts


def test_profile_validation(tmp_path):
    with pytest.raises(ValueError):
        Profile(np.array([0.1, 0.2, 0.3]), np.zeros(3))
    with pytest.raises(ValueError):
        Profile(np.array([0.0, 0.1, 0.3]), np.zeros(3))
    x = uniform_grid(1.0, 0.25)
    prof = Profile(x, x**2, 0.5)
    prof.to_csv(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["x", "u", "t"] and len(rows) == x.size + 1
    assert float(rows[3][1]) == x[2] ** 2


def test_default_grid_resolution():
    x = default_grid(P)
    assert x[1] - x[0] == pytest.approx(U0 / 512)
    assert x[-1] == pytest.approx(8 * U0)


def test_sign_changes_basic():
    x = np.linspace(0, 1, 11)
    n, locs, slopes = sign_changes(0.5 - x, x)
    assert n == 1 and locs[0] == pytest.approx(0.5) and slopes[0] < 0
    assert sign_changes(np.array([1.0, 1e-20, 1.0]))[0] == 0
    assert sign_changes(np.sin(6 * np.pi * x[1:-1] + 0.1))[0] == 5


@pytest.mark.parametrize("make", [hitting_prob_function, scale_function])
def test_second_order_convergence(make):
    fn = make(P, 0.05)
    errs, orders = convergence_order(P, fn, 0.5, levels=(64, 128, 256), extent=6.0)
    assert np.all(errs[1:] < errs[:-1])
    assert np.all(np.abs(orders - 2.0) <= 0.3)


def test_scale_function_tracks_closed_form():
    fn = scale_function(P, 0.05)
    x = default_grid(P)
    prof = fn.run(P, x, [1.0])[0]
    mask = x <= 3 * U0
    exact = passage.scale_h(P, x[mask][1:], 1.0)
    assert np.max(np.abs(prof.u[mask][1:] - exact)) < 1e-5


def test_zero_data_stays_zero():
    x = uniform_grid(4.0, 0.01)
    zero = Profile(x, np.zeros_like(x))
    out = evolve(P, zero, lambda t: 0.0, 1.0, right_boundary=lambda t: 0.0)
    assert np.all(out.u == 0.0)


def test_negative_data_never_crosses():
    x = default_grid(P)
    fn = bump_function(P, 1.0, 0.5, 2 * U0, 0.2 * U0)
    res = check_single_crossing(P, fn, SAMPLES, x)
    assert all(r.n_sign_changes == 0 for r in res.reports)
    assert all(r.kind == "empty" for r in check_interval_positivity(P, fn, SAMPLES, x).reports)


def test_random_one_crossing_family():
    rng = np.random.default_rng(2024)
    for fn in random_one_crossing_family(P, 20, rng):
        res = check_single_crossing(P, fn, SAMPLES)
        assert res.passed, fn.meta
        slope = check_nondegenerate_crossing(P, fn, SAMPLES)
        assert slope.passed and slope.meta["margin"] > 0, fn.meta


def test_random_bump_family():
    rng = np.random.default_rng(77)
    for fn in random_bump_family(P, 20, rng, SAMPLES[-1]):
        res = check_interval_positivity(P, fn, SAMPLES)
        assert res.passed, fn.meta
        assert positive_set_report(fn.profile(default_grid(P))).kind == "interval"


def test_beta_ramp_single_crossing(gap):
    _, ts = gap
    fn = beta_ramp_function(P, ts.beta_star)
    res = check_single_crossing(P, fn, np.linspace(0.005, 0.5, 10))
    assert res.passed


def test_crossing_location_insensitive_to_domain():
    rng = np.random.default_rng(5)
    fn = random_one_crossing_family(P, 1, rng)[0]
    dx = U0 / 512
    a = crossing_report(fn.run(P, uniform_grid(8 * U0, dx), [1.0])[0])
    b = crossing_report(fn.run(P, uniform_grid(16 * U0, dx), [1.0])[0])
    assert a.n_sign_changes == b.n_sign_changes == 1
    assert abs(a.crossing_locations[0] - b.crossing_locations[0]) < dx


@pytest.mark.parametrize("t", [1e-4, 1e-3, 1e-2])
def test_gap_slope_and_curvature_pattern(gap, t):
    g, ts = gap
    x = default_grid(P)
    slope = slope_sign_pattern(g, t, x)
    assert slope.n_sign_changes == 1 and slope.crossing_slopes[0] < 0
    curv = positive_curvature_set(g, t, x)
    assert curv.single_interval
    assert curv.a > slope.crossing_locations[0]
    assert abs(curv.b - ts.u2) <= 2 * (x[1] - x[0])


def test_gap_touch_has_negative_curvature(gap):
    g, ts = gap
    rep = touch_curvature(P, g, P.Delta)
    dx = U0 / 512
    assert rep.second_difference < 0 and rep.second_exact < 0
    assert abs(rep.x_touch - ts.u1) < dx
    assert abs(rep.u_max) < 10 * dx**2
    assert rep.second_difference == pytest.approx(rep.second_exact, rel=0.01)
    assert float(g(np.array([ts.u1]), P.Delta)[0]) == pytest.approx(0.0, abs=1e-12)


def test_gap_positive_set_is_narrow(gap):
    g, ts = gap
    prof = g.as_test_function().run(P, default_grid(P), [P.Delta])[0]
    rep = positive_set_report(prof)
    assert rep.admissible and rep.left < ts.u1 < rep.right
    assert rep.width < 0.05 * U0


def test_instability_detected():
    x = uniform_grid(4.0, 0.01)
    prof = Profile(x, np.ones_like(x))
    with pytest.raises(InstabilityDetected):
        evolve(P, prof, lambda t: 1.0, 1.0, right_boundary=lambda t: 1.0 if t < 0.5 else math.nan)
    with pytest.raises(InstabilityDetected):
        evolve_samples(P, prof, lambda t: 1.0, [1.0], right_boundary=lambda t: 1.0, growth_bound=0.1)
    ok = evolve_samples(P, prof, lambda t: 1.0, [1.0], right_boundary=lambda t: 1.0)[0]
    assert np.allclose(ok.u, 1.0, atol=1e-12)


def test_reports_csv(tmp_path):
    rng = np.random.default_rng(1)
    fn = random_one_crossing_family(P, 1, rng)[0]
    res = check_single_crossing(P, fn, SAMPLES[:3])
    out = tmp_path / "r.csv"
    write_reports_csv(res.reports, out)
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 3 and set(rows[0]) == {"t", "n_sign_changes", "crossing_locations", "crossing_slopes"}
