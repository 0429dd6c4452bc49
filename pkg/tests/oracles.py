"""Independent reference computations used only by the tests.

Nothing here calls the closed forms under test: roots come from a generic
polynomial solver, kernels from direct quadrature of the absorbed Gaussian
density, expectations from plain NumPy Monte Carlo, thresholds from a direct
search over the defining supremum.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


# --------------------------------------------------------------------------- #
# roots and barrier
# --------------------------------------------------------------------------- #


def roots_by_polynomial(mu, sigma, rho):
    r = np.roots([0.5 * sigma**2, mu, -rho])
    pos = float(max(r.real))
    neg = float(min(r.real))
    return pos, -neg


def barrier_by_translation(mu, sigma, rho, iters=200):
    """Bisect on the point ``a`` where the ODE solution with ``f(a)=mu/rho, f'(a)=1`` gives ``f(0)=0``."""
    r1, r2 = roots_by_polynomial(mu, sigma, rho)
    # basis anchored at a, so the 2x2 system is the same for every a
    A, B = np.linalg.solve(np.array([[1.0, 1.0], [r1, -r2]]), [mu / rho, 1.0])

    def f0(a):
        with np.errstate(over="ignore"):
            return A * np.exp(-r1 * a) + B * np.exp(r2 * a)

    lo, hi = 1e-12, mu / rho
    flo = f0(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f0(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def bisect_increasing(fun, target, lo, hi, tol=1e-13):
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if fun(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------- #
# absorbed Gaussian kernel by quadrature
# --------------------------------------------------------------------------- #


def green(mu, sigma, x, y, t):
    s2t = sigma**2 * t
    c = 1.0 / math.sqrt(2.0 * math.pi * s2t)
    return c * (
        np.exp(-((x - y + mu * t) ** 2) / (2 * s2t)) - np.exp(-2 * mu * x / sigma**2 - (x + y - mu * t) ** 2 / (2 * s2t))
    )


def _kernel_integral(mu, sigma, x, t, weight):
    sd = sigma * math.sqrt(t)
    centre = x + mu * t
    pts = sorted({max(0.0, centre - 8 * sd), centre, centre + 8 * sd})
    total = 0.0
    edges = [0.0] + [p for p in pts if p > 0.0]
    for a, b in zip(edges, edges[1:]):
        val, _ = integrate.quad(lambda y: weight(y) * green(mu, sigma, x, y, t), a, b, epsabs=1e-14, epsrel=1e-13, limit=400)
        total += val
    val, _ = integrate.quad(lambda y: weight(y) * green(mu, sigma, x, y, t), edges[-1], np.inf, epsabs=1e-14, limit=400)
    return total + val


def p_by_quadrature(mu, sigma, x, t):
    if x == 0.0:
        return 1.0
    return 1.0 - _kernel_integral(mu, sigma, x, t, lambda y: 1.0)


def h_by_quadrature(mu, sigma, x, t):
    """``E[X(t); tau > t] = E[X(t ^ tau)]``."""
    if x == 0.0:
        return 0.0
    return _kernel_integral(mu, sigma, x, t, lambda y: y)


def forward_derivative_at_zero(fun, f0, h):
    """Fourth-order one-sided difference using f(0) = f0."""
    f = [f0] + [fun(k * h) for k in range(1, 5)]
    return (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)


# --------------------------------------------------------------------------- #
# Monte Carlo with NumPy's generator
# --------------------------------------------------------------------------- #


def mc_absorbed(mu, sigma, x, t, n_paths, n_steps, seed, chunk=250_000):
    """Return per-path ``(hit, X(t ^ tau))`` with bridge-corrected absorption at 0."""
    rng = np.random.default_rng(seed)
    h = t / n_steps
    sd = sigma * math.sqrt(h)
    hits, finals = [], []
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        pos = np.full(m, float(x))
        alive = np.ones(m, dtype=bool)
        for _ in range(n_steps):
            z = rng.standard_normal(m)
            u = rng.random(m)
            new = pos + mu * h + sd * z
            cross = (new <= 0.0) | (u < np.exp(-2.0 * np.maximum(pos, 0) * np.maximum(new, 0) / (sigma**2 * h)))
            alive &= ~cross
            pos = np.where(alive, new, 0.0)
        hits.append(~alive)
        finals.append(pos)
    return np.concatenate(hits), np.concatenate(finals)


def mc_exit(mu, sigma, rho, u1, u2, x, n_paths, h, seed):
    """Discounted two-sided exit from ``(u1, u2)``; returns per-path ``(lower_term, upper_term)``."""
    rng = np.random.default_rng(seed)
    sd = sigma * math.sqrt(h)
    pos = np.full(n_paths, float(x))
    t = 0.0
    lower = np.zeros(n_paths)
    upper = np.zeros(n_paths)
    active = np.arange(n_paths)
    while active.size and t < 60.0 / rho:
        m = active.size
        xa = pos[active]
        new = xa + mu * h + sd * rng.standard_normal(m)
        uu, ud = rng.random(m), rng.random(m)
        var = sigma**2 * h
        up = (new >= u2) | (uu < np.exp(-2 * (u2 - xa) * np.maximum(u2 - new, 0) / var))
        dn = (new <= u1) | (ud < np.exp(-2 * (xa - u1) * np.maximum(new - u1, 0) / var))
        both = up & dn
        up = up & ~(both & (new - u1 < u2 - new))
        dn = dn & ~up
        t += h
        d = math.exp(-rho * t)
        upper[active[up]] = d
        lower[active[dn]] = d
        pos[active] = new
        active = active[~(up | dn)]
    return lower, upper


# --------------------------------------------------------------------------- #
# thresholds by direct envelope search
# --------------------------------------------------------------------------- #


def envelope_search(params, beta, delta, v0, u0, p_fn, h_fn, n_grid=4096):
    """Largest ``z`` with ``F(x) <= e^{rho D} V0(x - z + u0)`` on a grid, and the touching point.

    ``F = beta (1 - p) + h``; ``p_fn``/``h_fn`` evaluate the kernel on arrays.
    The grid is refined twice around the smallest gap.
    """
    grow = math.exp(params.rho * delta)
    x_hi = max(10.0 * u0, u0 + 10.0 * params.sigma * math.sqrt(delta))

    def F(x):
        return beta * (1.0 - p_fn(x, delta)) + h_fn(x, delta)

    def max_violation(z, x):
        return np.max(F(x) - grow * v0(x - z + u0))

    def solve_on(x):
        lo, hi = 0.0, u0
        if max_violation(hi, x) <= 0.0:
            return hi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if max_violation(mid, x) <= 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15:
                break
        return lo

    x = np.linspace(1e-12, x_hi, n_grid)
    z = solve_on(x)
    for width in (16, 16):
        gap = grow * v0(x - z + u0) - F(x)
        i = int(np.argmin(gap))
        dx = x[1] - x[0]
        x = np.linspace(max(1e-12, x[i] - width * dx), x[i] + width * dx, n_grid)
        z = solve_on(np.concatenate([x, np.linspace(1e-12, x_hi, n_grid)]))
    gap = grow * v0(x - z + u0) - F(x)
    i = int(np.argmin(gap))
    return z, float(x[i]), float(x[1] - x[0])


def mv_brute_force(params, value_fn, x, u_scan_hi, n_scan=4001):
    """``e^{-rho D} E[sup_s (V(X_D + s) - s - K); survive]`` by quadrature and a scan over ``s``."""
    d = params.Delta
    s_grid_rel = np.linspace(0.0, u_scan_hi, n_scan)

    def best(y):
        # scan the post-issuance level y + s over [0, u_scan_hi], refine around the best node
        vals = value_fn(s_grid_rel) - (s_grid_rel - y) - params.K
        i = int(np.argmax(vals))
        lo = s_grid_rel[max(i - 1, 0)]
        hi = s_grid_rel[min(i + 1, n_scan - 1)]
        res = optimize.minimize_scalar(
            lambda lvl: -(value_fn(np.array([lvl]))[0] - (lvl - y) - params.K), bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-12},
        )
        return max(-res.fun, vals[i])

    def integrand(y):
        return best(y) * green(params.mu, params.sigma, x, y, d)

    sd = params.sigma * math.sqrt(d)
    c = x + params.mu * d
    a, b = max(0.0, c - 10 * sd), c + 10 * sd
    val, _ = integrate.quad(integrand, a, b, epsabs=1e-11, epsrel=1e-11, limit=400)
    return math.exp(-params.rho * d) * val
