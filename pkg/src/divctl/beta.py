"""The critical intervention level ``beta(t)`` and the regime boundary ``Delta0``.

``beta(t) = [h_x(0, t) - exp(rho t) V0'(0)] / p_x(0, t)``.  It is positive,
strictly increasing, vanishes like ``sqrt(t)`` at 0 and grows without bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import ndtr

from .model import ModelParams, solve_barrier

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _boundary_slopes(params: ModelParams, t):
    """Closed forms of ``h_x(0, t)`` and ``p_x(0, t)``.

    At ``x = 0`` both Green's-function terms share ``z = mu sqrt(t) / sigma``:
    ``p_x(0,t) = -2 phi(z)/(sigma sqrt t) - (2 mu/sigma^2) Phi(z)`` and
    ``h_x(0,t) = Phi(z) (2 + 2 mu^2 t / sigma^2) + 2 z phi(z)``.
    """
    t = np.asarray(t, dtype=float)
    mu, sig = params.mu, params.sigma
    z = mu * np.sqrt(t) / sig
    phi = np.exp(-0.5 * z * z) / _SQRT_2PI
    big_phi = ndtr(z)
    p_x = -2.0 * phi / (sig * np.sqrt(t)) - 2.0 * mu / sig**2 * big_phi
    h_x = big_phi * (2.0 + 2.0 * mu**2 * t / sig**2) + 2.0 * z * phi
    return h_x, p_x


def beta_of_t(params: ModelParams, t):
    """``beta(t)`` for scalar or array ``t > 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("t must be > 0")
    sol = solve_barrier(params)
    h_x, p_x = _boundary_slopes(params, t)
    out = (h_x - np.exp(params.rho * t) * sol.slope_at_zero) / p_x
    return float(out) if out.ndim == 0 else out


def beta_smalltime_constant(params: ModelParams) -> float:
    """``(V0'(0) - 1) sqrt(pi sigma^2 / 2)``, the limit of ``beta(t)/sqrt(t)``."""
    sol = solve_barrier(params)
    return (sol.slope_at_zero - 1.0) * math.sqrt(math.pi * params.sigma**2 / 2.0)


def beta_smalltime_ratio(params: ModelParams, t):
    """``beta(t) / (sqrt(t) * limit constant)``; tends to 1 as ``t -> 0``."""
    return beta_of_t(params, t) / (np.sqrt(t) * beta_smalltime_constant(params))


class NoRegimeBoundary(ValueError):
    """``K >= mu/rho - u0``: the barrier-only regime holds for every delay."""


def solve_delta0(params: ModelParams, rtol: float = 1e-12) -> float:
    """Delay ``Delta0`` at which ``beta(Delta0) = mu/rho - K - u0``.

    The bracket is grown geometrically from ``t = 1`` until the monotone
    residual changes sign, then refined with Brent's method.
    """
    sol = solve_barrier(params)
    target = params.payout_level - params.K - sol.u0
    if target <= 0.0:
        raise NoRegimeBoundary(
            f"K={params.K} >= mu/rho - u0 = {params.payout_level - sol.u0}: no positive Delta0"
        )

    def resid(t: float) -> float:
        return beta_of_t(params, t) - target

    lo, hi = 1.0, 1.0
    while resid(lo) > 0.0:
        lo *= 0.125
        if lo < 1e-300:
            raise ArithmeticError("failed to bracket Delta0 from below")
    while resid(hi) < 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise ArithmeticError("failed to bracket Delta0 from above")
    if lo == hi:
        hi = 2.0 * lo
    return optimize.brentq(resid, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=500)


@dataclass
class BetaCurve:
    """``beta`` sampled on a log-spaced grid, kept for diagnostics and plotting."""

    params: ModelParams
    t_min: float = 1e-6
    t_max: float = 1e2
    n: int = 40
    t: np.ndarray = field(init=False)
    beta: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.t = np.geomspace(self.t_min, self.t_max, self.n)
        self.beta = np.asarray(beta_of_t(self.params, self.t))

    def __call__(self, t):
        return beta_of_t(self.params, t)

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.beta) > 0.0))

    @property
    def positive(self) -> bool:
        return bool(np.all(self.beta > 0.0))
