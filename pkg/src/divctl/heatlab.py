"""Finite-difference experiments for ``u_t = A u`` on the half line.

``A = sigma^2/2 d^2/dx^2 + mu d/dx``.  A solution is advanced by Crank-Nicolson
with a Rannacher start (four backward-Euler half steps) so that jump-type
initial data do not seed spurious oscillations.  Both ends are Dirichlet: the
left value is prescribed, the right value comes from the far-field evolution
of the test function (exact for every family used here, a linear-drift
extrapolation otherwise).

The checks count sign changes of evolved profiles (at most one crossing from
one-crossing data; a single positive interval from one-bump data; positive
slope at the crossing), and probe the curvature structure of the gap function
``u(x,t) = beta (1 - p) + h - exp(rho t) V0(x - u2 + u0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_banded

from . import passage
from .model import ModelParams, solve_barrier, v0_eval

BoundaryFn = Callable[[float], float]


class InstabilityDetected(RuntimeError):
    """The discrete solution grew beyond what the data allow."""


@dataclass
class Profile:
    """Values ``u`` on the uniform grid ``x`` at time ``t``."""

    x: np.ndarray
    u: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        if self.x.shape != self.u.shape or self.x.ndim != 1 or self.x.size < 3:
            raise ValueError("x and u must be 1-d arrays of equal length >= 3")
        steps = np.diff(self.x)
        if self.x[0] != 0.0 or np.ptp(steps) > 1e-9 * steps[0]:
            raise ValueError("grid must be uniform and start at 0")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def x_max(self) -> float:
        return float(self.x[-1])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "u", "t"])
            for xi, ui in zip(self.x, self.u):
                w.writerow([repr(float(xi)), repr(float(ui)), repr(self.t)])


def uniform_grid(x_max: float, dx: float) -> np.ndarray:
    n = int(round(x_max / dx))
    return np.linspace(0.0, n * dx, n + 1)


def default_grid(params: ModelParams, cells_per_u0: int = 512, extent: float = 8.0) -> np.ndarray:
    """``dx = u0/512`` on ``[0, 8 u0]``."""
    u0 = solve_barrier(params).u0
    return uniform_grid(extent * u0, u0 / cells_per_u0)


# --------------------------------------------------------------------------- #
# the scheme
# --------------------------------------------------------------------------- #


def _operator_bands(params: ModelParams, dx: float):
    a = 0.5 * params.sigma**2 / dx**2
    b = 0.5 * params.mu / dx
    return a - b, -2.0 * a, a + b


def _theta_step(params, u, t, dt, theta, dx, left: BoundaryFn, right: BoundaryFn):
    lo, di, up = _operator_bands(params, dx)
    n = u.size - 2
    t1 = t + dt
    g0, g1 = left(t), left(t1)
    r0, r1 = right(t), right(t1)
    inner = u[1:-1]
    lu = lo * u[:-2] + di * inner + up * u[2:]
    rhs = inner + (1.0 - theta) * dt * lu
    rhs[0] += theta * dt * lo * g1
    rhs[-1] += theta * dt * up * r1
    ab = np.empty((3, n))
    ab[0, :] = -theta * dt * up
    ab[1, :] = 1.0 - theta * dt * di
    ab[2, :] = -theta * dt * lo
    out = np.empty_like(u)
    out[1:-1] = solve_banded((1, 1), ab, rhs, overwrite_ab=True, overwrite_b=True, check_finite=False)
    out[0] = g1
    out[-1] = r1
    return out


def linear_far_field(params: ModelParams, initial: Profile) -> BoundaryFn:
    """Right closure for data that are asymptotically linear: ``u(X, t) = u(X, 0) + mu u_x(X, 0) t``."""
    slope = (initial.u[-1] - initial.u[-2]) / initial.dx
    start = float(initial.u[-1])
    mu = params.mu
    return lambda t: start + mu * slope * (t - initial.t)


def evolve_samples(
    params: ModelParams,
    initial: Profile,
    left_boundary: BoundaryFn,
    t_samples: Sequence[float],
    dt: Optional[float] = None,
    right_boundary: Optional[BoundaryFn] = None,
    startup_steps: int = 4,
    growth_bound: float = 1e3,
) -> list[Profile]:
    """Advance ``initial`` and return the profile at each time in ``t_samples`` (ascending).

    Between samples the step is the largest one not exceeding ``dt`` that
    lands exactly on the sample.  The first ``startup_steps / 2`` steps are
    replaced by ``startup_steps`` backward-Euler half steps.
    """
    dx = initial.dx
    dt = dx if dt is None else float(dt)
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    times = [float(s) for s in t_samples]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < initial.t):
        raise ValueError("t_samples must be ascending and not before the initial time")
    right = right_boundary if right_boundary is not None else linear_far_field(params, initial)

    u = initial.u.copy()
    u[0] = left_boundary(initial.t)
    t = initial.t
    # growth allowance: data size plus the boundary drift over the run
    ref = max(np.max(np.abs(u)), 1.0)
    span = times[-1] if times else t
    probe = [abs(left_boundary(s)) + abs(right(s)) for s in np.linspace(t, span, 9)]
    bound = growth_bound * (ref + max(probe))

    out: list[Profile] = []
    startup_left = startup_steps
    for target in times:
        while target - t > 1e-14 * max(1.0, target):
            n_left = math.ceil((target - t) / dt - 1e-9)
            h = (target - t) / n_left
            if startup_left > 0:
                half = 0.5 * h
                for _ in range(2):
                    u = _theta_step(params, u, t, half, 1.0, dx, left_boundary, right)
                    t += half
                startup_left -= 2
            else:
                u = _theta_step(params, u, t, h, 0.5, dx, left_boundary, right)
                t += h
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > bound:
                raise InstabilityDetected(f"solution norm exceeded {bound:.3g} at t={t:.6g}")
        t = target
        out.append(Profile(initial.x, u.copy(), t))
    return out


def evolve(
    params: ModelParams,
    initial: Profile,
    left_boundary: BoundaryFn,
    t_end: float,
    dt: Optional[float] = None,
    right_boundary: Optional[BoundaryFn] = None,
) -> Profile:
    return evolve_samples(params, initial, left_boundary, [t_end], dt, right_boundary)[0]


# --------------------------------------------------------------------------- #
# test functions with known evolution
# --------------------------------------------------------------------------- #


@dataclass
class TestFunction:
    """Initial data with boundary closures; ``exact`` is the true evolution where known."""

    __test__ = False  # not a pytest class

    name: str
    initial: Callable[[np.ndarray], np.ndarray]
    left: BoundaryFn
    right: Callable[[np.ndarray, float], np.ndarray]
    exact: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    def profile(self, x: np.ndarray) -> Profile:
        u = np.asarray(self.initial(x), dtype=float).copy()
        u[0] = self.left(self.t0)
        return Profile(x, u, self.t0)

    def run(self, params: ModelParams, x: np.ndarray, t_samples, dt=None) -> list[Profile]:
        x_max = float(x[-1])
        return evolve_samples(
            params, self.profile(x), self.left, t_samples, dt, lambda t: float(self.right(np.array([x_max]), t)[0])
        )


def hitting_prob_function(params: ModelParams, t0: float) -> TestFunction:
    """``p(., t0)`` evolved under ``A`` stays ``p(., t0 + s)``."""

    def exact(x, t):
        return np.asarray(passage.hitting_prob(params, np.maximum(x, 0.0), t), dtype=float) * (x > 0) + (x <= 0)

    return TestFunction("p", lambda x: exact(x, t0), lambda t: 1.0, exact, exact, t0)


def scale_function(params: ModelParams, t0: float) -> TestFunction:
    def exact(x, t):
        return np.asarray(passage.scale_h(params, np.maximum(x, 0.0), t), dtype=float)

    return TestFunction("h", lambda x: exact(x, t0), lambda t: 0.0, exact, exact, t0)


def _pos_part_eval(fn, x, t):
    """Evaluate a closed form that needs ``t > 0`` and ``x >= 0``; ``t = 0`` handled by caller."""
    return np.asarray(fn(np.maximum(x, 0.0), t), dtype=float)


def beta_ramp_function(params: ModelParams, beta: float) -> TestFunction:
    """``beta (1 - p) + h - exp(rho t) V0(x)``: data ``beta + x - V0(x)``, zero boundary."""
    sol = solve_barrier(params)

    def exact(x, t):
        x = np.asarray(x, dtype=float)
        if t <= 0.0:
            return np.where(x > 0.0, beta + x - v0_eval(sol, x), 0.0)
        p = _pos_part_eval(lambda y, s: passage.hitting_prob(params, y, s), x, t)
        h = _pos_part_eval(lambda y, s: passage.scale_h(params, y, s), x, t)
        return beta * (1.0 - p) + h - math.exp(params.rho * t) * v0_eval(sol, x)

    return TestFunction("beta_ramp", lambda x: exact(x, 0.0), lambda t: 0.0, exact, exact, 0.0, {"beta": beta})


@dataclass(frozen=True)
class GapFunction:
    """``u(x,t) = beta (1 - p(x,t)) + h(x,t) - exp(rho t) V0(x - u2 + u0)`` with closed-form derivatives."""

    params: ModelParams
    beta: float
    u2: float

    @property
    def shift(self) -> float:
        return solve_barrier(self.params).u0 - self.u2

    def __call__(self, x, t, order: int = 0):
        p = self.params
        sol = solve_barrier(p)
        x = np.asarray(x, dtype=float)
        arg = x + self.shift
        if t <= 0.0:
            if order == 0:
                return np.where(x > 0.0, self.beta + x - v0_eval(sol, arg), -v0_eval(sol, self.shift))
            return (1.0 if order == 1 else 0.0) - v0_eval(sol, arg, order)
        grow = math.exp(p.rho * t)
        if order == 0:
            return self.beta * (1.0 - passage.hitting_prob(p, x, t)) + passage.scale_h(p, x, t) - grow * v0_eval(
                sol, arg
            )
        if order == 1:
            return -self.beta * passage.hitting_prob_dx(p, x, t) + passage.scale_h_dx(p, x, t) - grow * v0_eval(
                sol, arg, 1
            )
        if order == 2:
            return -self.beta * passage.hitting_prob_dxx(p, x, t) + passage.scale_h_dxx(p, x, t) - grow * v0_eval(
                sol, arg, 2
            )
        raise ValueError("order must be 0, 1 or 2")

    def left(self, t: float) -> float:
        return -math.exp(self.params.rho * t) * v0_eval(solve_barrier(self.params), self.shift)

    def as_test_function(self) -> TestFunction:
        exact = lambda x, t: np.asarray(self(x, t), dtype=float)
        return TestFunction(
            "gap", lambda x: exact(x, 0.0), self.left, exact, exact, 0.0, {"beta": self.beta, "u2": self.u2}
        )


def _drift_exp(params: ModelParams, x, t, scale: float):
    """Whole-line evolution of ``exp(-x/scale)``."""
    y = x + params.mu * t
    return np.exp(-y / scale + 0.5 * params.sigma**2 * t / scale**2)


def one_crossing_function(
    params: ModelParams, a: float, b: float, c: float, ell: float, d: float, m: float
) -> TestFunction:
    """``a - b x - c (1 - e^{-x/ell}) + d x e^{-x/m}`` with zero left boundary.

    The far field uses the exact whole-line evolution, which differs from the
    half-line solution only by the (negligible) boundary-layer correction.
    """

    def whole_line(x, t):
        x = np.asarray(x, dtype=float)
        y = x + params.mu * t
        s2t = params.sigma**2 * t
        return a - c - b * y + c * _drift_exp(params, x, t, ell) + d * _drift_exp(params, x, t, m) * (y - s2t / m)

    def initial(x):
        return whole_line(x, 0.0)

    meta = dict(a=a, b=b, c=c, ell=ell, d=d, m=m)
    return TestFunction("one_crossing", initial, lambda t: 0.0, whole_line, None, 0.0, meta)


def bump_function(params: ModelParams, a: float, b: float, c: float, w: float) -> TestFunction:
    """``-a + b exp(-(x - c)^2 / 2 w^2)``, evolved exactly on the whole line (left value = trace at 0)."""

    def exact(x, t):
        x = np.asarray(x, dtype=float)
        var = w * w + params.sigma**2 * t
        return -a + b * w / np.sqrt(var) * np.exp(-((x + params.mu * t - c) ** 2) / (2.0 * var))

    left = lambda t: float(exact(np.array([0.0]), t)[0])
    return TestFunction("bump", lambda x: exact(x, 0.0), left, exact, exact, 0.0, dict(a=a, b=b, c=c, w=w))


def random_one_crossing_family(
    params: ModelParams, n: int, rng: np.random.Generator, x: Optional[np.ndarray] = None
) -> list[TestFunction]:
    """``n`` random one-sign-change data (positive at 0+, negative far out)."""
    x = default_grid(params) if x is None else x
    u0 = solve_barrier(params).u0
    out = []
    while len(out) < n:
        a = rng.uniform(0.1, 2.0)
        b = rng.uniform(0.05, 1.0)
        c = rng.uniform(0.0, 1.0)
        ell = rng.uniform(0.05, 1.0) * u0
        d = rng.uniform(0.0, 2.0) if rng.uniform() < 0.5 else 0.0
        m = rng.uniform(0.1, 1.0) * u0
        f = one_crossing_function(params, a, b, c, ell, d, m)
        if sign_changes(f.initial(x[1:]))[0] == 1 and f.initial(x[-1:])[0] < 0.0:
            out.append(f)
    return out


def random_bump_family(
    params: ModelParams, n: int, rng: np.random.Generator, t_end: float, x: Optional[np.ndarray] = None
) -> list[TestFunction]:
    """``n`` random bumps whose trace at 0 stays negative up to ``t_end``."""
    x = default_grid(params) if x is None else x
    u0 = solve_barrier(params).u0
    ts = np.linspace(0.0, t_end, 201)
    out = []
    while len(out) < n:
        a = rng.uniform(0.1, 1.0)
        b = a * rng.uniform(1.2, 4.0)
        w = rng.uniform(0.05, 0.3) * u0
        c = rng.uniform(1.0, 4.0) * u0
        f = bump_function(params, a, b, c, w)
        trace0 = np.array([f.left(s) for s in ts])
        if np.all(trace0 < 0.0) and f.exact(x[-1:], t_end)[0] < 0.0:
            out.append(f)
    return out


# --------------------------------------------------------------------------- #
# sign-change bookkeeping
# --------------------------------------------------------------------------- #


def sign_changes(u: np.ndarray, x: Optional[np.ndarray] = None, rel_zero: float = 1e-12):
    """Count sign changes of ``u`` after dropping near-zero samples.

    Returns ``(count, locations, slopes)``; locations are linear interpolants
    between the bracketing nonzero samples, slopes are the secant through them.
    """
    u = np.asarray(u, dtype=float)
    x = np.arange(u.size, dtype=float) if x is None else np.asarray(x, dtype=float)
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    keep = np.abs(u) > rel_zero * scale
    idx = np.nonzero(keep)[0]
    if idx.size < 2:
        return 0, [], []
    s = np.sign(u[idx])
    flips = np.nonzero(s[1:] != s[:-1])[0]
    locs, slopes = [], []
    for k in flips:
        i, j = idx[k], idx[k + 1]
        ui, uj = u[i], u[j]
        locs.append(float(x[i] + (x[j] - x[i]) * ui / (ui - uj)))
        slopes.append(float((uj - ui) / (x[j] - x[i])))
    return int(flips.size), locs, slopes


@dataclass
class CrossingReport:
    t: float
    n_sign_changes: int
    crossing_locations: list[float]
    crossing_slopes: list[float]

    @property
    def single(self) -> bool:
        return self.n_sign_changes <= 1


def crossing_report(profile: Profile) -> CrossingReport:
    n, locs, slopes = sign_changes(profile.u, profile.x)
    return CrossingReport(profile.t, n, locs, slopes)


@dataclass
class PositiveSetReport:
    """Shape of ``{x > 0 : u(x, t) >= 0}`` on the grid."""

    t: float
    kind: str
    n_components: int
    left: Optional[float]
    right: Optional[float]
    interior_positive: bool

    @property
    def width(self) -> float:
        if self.left is None:
            return 0.0
        return self.right - self.left

    @property
    def admissible(self) -> bool:
        return self.n_components <= 1 and self.interior_positive


def positive_set_report(profile: Profile, degenerate_cells: float = 2.0) -> PositiveSetReport:
    u, x, dx = profile.u[1:], profile.x[1:], profile.dx
    nonneg = u >= 0.0
    if not np.any(nonneg):
        return PositiveSetReport(profile.t, "empty", 0, None, None, True)
    edges = np.diff(nonneg.astype(int))
    starts = list(np.nonzero(edges == 1)[0] + 1)
    ends = list(np.nonzero(edges == -1)[0])
    if nonneg[0]:
        starts.insert(0, 0)
    if nonneg[-1]:
        ends.append(nonneg.size - 1)
    i, j = starts[0], ends[-1]
    # interpolate the edges of the outermost components
    left = float(x[i]) if i == 0 else float(x[i - 1] + dx * (-u[i - 1]) / (u[i] - u[i - 1]))
    right = float(x[j]) if j == u.size - 1 else float(x[j] + dx * u[j] / (u[j] - u[j + 1]))
    interior = bool(np.all(u[i + 1 : j] > 0.0)) if j - i >= 2 else True
    kind = "point-or-degenerate" if right - left <= degenerate_cells * dx else "interval"
    return PositiveSetReport(profile.t, kind, len(starts), left, right, interior)


# --------------------------------------------------------------------------- #
# checks
# --------------------------------------------------------------------------- #


@dataclass
class TrialResult:
    name: str
    reports: list
    passed: bool
    meta: dict = field(default_factory=dict)


def check_single_crossing(
    params: ModelParams, fn: TestFunction, t_samples, x: Optional[np.ndarray] = None, dt=None
) -> TrialResult:
    """At most one sign change at each sample, and the count never increases."""
    x = default_grid(params) if x is None else x
    reports = [crossing_report(p) for p in fn.run(params, x, t_samples, dt)]
    counts = [r.n_sign_changes for r in reports]
    ok = all(c <= 1 for c in counts) and all(b <= a for a, b in zip(counts, counts[1:]))
    return TrialResult(fn.name, reports, ok, dict(fn.meta))


def check_interval_positivity(
    params: ModelParams, fn: TestFunction, t_samples, x: Optional[np.ndarray] = None, dt=None
) -> TrialResult:
    """The nonnegative set is empty, a degenerate point or one interval with positive interior."""
    x = default_grid(params) if x is None else x
    reports = [positive_set_report(p) for p in fn.run(params, x, t_samples, dt)]
    return TrialResult(fn.name, reports, all(r.admissible for r in reports), dict(fn.meta))


@dataclass
class SlopeReport:
    t: float
    location: Optional[float]
    oriented_slope: Optional[float]


def check_nondegenerate_crossing(
    params: ModelParams, fn: TestFunction, t_samples, x: Optional[np.ndarray] = None, dt=None
) -> TrialResult:
    """Slope at the unique crossing is bounded away from 0.

    The slope is oriented so that a crossing from the sign at ``0+`` to the
    far-field sign counts as positive; a profile without a crossing yields no
    constraint.  ``meta["margin"]`` is the smallest oriented slope seen.
    """
    x = default_grid(params) if x is None else x
    far_sign = np.sign(fn.initial(x[-1:])[0])
    orient = 1.0 if far_sign > 0 else -1.0
    reports, margin, ok = [], math.inf, True
    for prof in fn.run(params, x, t_samples, dt):
        n, locs, slopes = sign_changes(prof.u, prof.x)
        if n == 0:
            reports.append(SlopeReport(prof.t, None, None))
            continue
        if n > 1:
            ok = False
        s = orient * slopes[0]
        margin = min(margin, s)
        ok = ok and s > 0.0
        reports.append(SlopeReport(prof.t, locs[0], s))
    meta = dict(fn.meta)
    meta["margin"] = margin
    return TrialResult(fn.name, reports, ok, meta)


def convergence_order(
    params: ModelParams, fn: TestFunction, t_end: float, levels: Sequence[int] = (128, 256, 512), extent: float = 8.0,
    window: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Max-norm errors against ``fn.exact`` for ``dx = u0 / n`` (``dt = dx``), and the observed orders."""
    if fn.exact is None:
        raise ValueError("test function has no exact evolution")
    u0 = solve_barrier(params).u0
    window = 2.0 * u0 if window is None else window
    errs = []
    for n in levels:
        x = uniform_grid(extent * u0, u0 / n)
        prof = fn.run(params, x, [t_end])[0]
        mask = x <= window
        errs.append(float(np.max(np.abs(prof.u[mask] - fn.exact(x[mask], t_end)))))
    errs = np.array(errs)
    ratios = np.array([n2 / n1 for n1, n2 in zip(levels, levels[1:])], dtype=float)
    orders = np.log(errs[:-1] / errs[1:]) / np.log(ratios)
    return errs, orders


@dataclass
class TouchReport:
    t: float
    x_touch: float
    u_max: float
    second_difference: float
    second_exact: float


def touch_curvature(
    params: ModelParams, gap: GapFunction, t: float, x: Optional[np.ndarray] = None, dt=None
) -> TouchReport:
    """Evolve the gap function to ``t`` and read the curvature at its interior maximum."""
    x = default_grid(params) if x is None else x
    prof = gap.as_test_function().run(params, x, [t], dt)[0]
    i = int(np.argmax(prof.u[1:-1])) + 1
    dx = prof.dx
    second = (prof.u[i + 1] - 2.0 * prof.u[i] + prof.u[i - 1]) / dx**2
    # refine the location with the parabola through the three nodes
    denom = prof.u[i + 1] - 2.0 * prof.u[i] + prof.u[i - 1]
    shift = 0.5 * (prof.u[i - 1] - prof.u[i + 1]) / denom if denom != 0.0 else 0.0
    xt = float(x[i] + shift * dx)
    return TouchReport(t, xt, float(prof.u[i]), float(second), float(gap(np.array([xt]), t, 2)[0]))


@dataclass
class CurvatureSetReport:
    t: float
    n_components: int
    a: Optional[float]
    b: Optional[float]

    @property
    def single_interval(self) -> bool:
        return self.n_components == 1


def positive_curvature_set(gap: GapFunction, t: float, x: np.ndarray) -> CurvatureSetReport:
    """``{x > 0 : u_xx(x, t) > 0}`` from the closed-form second derivative on ``x``."""
    x = np.asarray(x, dtype=float)
    x = x[x > 0.0]
    uxx = np.asarray(gap(x, t, 2), dtype=float)
    pos = uxx > 0.0
    if not np.any(pos):
        return CurvatureSetReport(t, 0, None, None)
    edges = np.diff(pos.astype(int))
    n_comp = int(np.count_nonzero(edges == 1)) + int(pos[0])
    idx = np.nonzero(pos)[0]
    return CurvatureSetReport(t, n_comp, float(x[idx[0]]), float(x[idx[-1]]))


def slope_sign_pattern(gap: GapFunction, t: float, x: np.ndarray) -> CrossingReport:
    """Sign changes of ``u_x(., t)`` for the gap function (closed form)."""
    x = np.asarray(x, dtype=float)
    x = x[x > 0.0]
    ux = np.asarray(gap(x, t, 1), dtype=float)
    n, locs, slopes = sign_changes(ux, x)
    return CrossingReport(t, n, locs, slopes)


def write_reports_csv(reports: Sequence, path: str | Path) -> None:
    """Flatten crossing / positive-set / slope reports to CSV rows."""
    rows = []
    for r in reports:
        d = dict(r.__dict__)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = ";".join(repr(float(e)) for e in v)
        rows.append(d)
    if not rows:
        Path(path).write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)
