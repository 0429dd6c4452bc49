"""Recapitalisation and dividend thresholds ``(u1, u2)``.

For an intervention level ``beta`` and delay ``t`` write

    F(x) = beta * (1 - p(x, t)) + h(x, t).

``u2(beta, t)`` is the largest shift ``z`` such that
``F(x) <= exp(rho t) V0(x - z + u0)`` for all ``x >= 0``, and ``u1`` is the
point where the two curves touch.  Since ``V0`` is increasing this is the same
as ``u2 = u0 + min_x [x - V0^{-1}(exp(-rho t) F(x))]`` with ``u1`` the
minimiser; at the touch the value and slope conditions

    F(u1)  = exp(rho t) V0 (u1 - u2 + u0)
    F'(u1) = exp(rho t) V0'(u1 - u2 + u0)

hold.  The optimal pair solves ``beta + u2(beta, Delta) = mu/rho - K``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from . import passage
from .beta import beta_of_t, solve_delta0
from .model import BarrierSolution, ModelParams, solve_barrier, v0_eval, v0_inverse, v0_inverse_array


class Regime(str, enum.Enum):
    BARRIER_ONLY = "BarrierOnly"
    TWO_THRESHOLD = "TwoThreshold"


class SolverDivergence(RuntimeError):
    """The tangency system could not be solved (typically ``beta`` within rounding of ``beta(Delta)``)."""


@dataclass(frozen=True)
class TangencySystem:
    beta: float
    delta: float
    u1: float
    u2: float
    residual_value: float
    residual_slope: float
    method: str = "newton"


@dataclass(frozen=True)
class ThresholdSolution:
    regime: Regime
    beta_star: float
    u1: float
    u2: float
    delta0: Optional[float]
    beta_delta: float
    u0: float
    fixed_point_residual: float = 0.0
    tangency: Optional[TangencySystem] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["regime"] = self.regime.value
        if self.tangency is not None:
            out["tangency"] = asdict(self.tangency)
        return out


def intervention_curve(params: ModelParams, beta: float, t: float, x, order: int = 0):
    """``F(x) = beta (1 - p) + h`` at delay ``t`` or its first/second x-derivative."""
    if order == 0:
        return beta * (1.0 - np.asarray(passage.hitting_prob(params, x, t))) + passage.scale_h(params, x, t)
    if order == 1:
        return -beta * np.asarray(passage.hitting_prob_dx(params, x, t)) + passage.scale_h_dx(params, x, t)
    if order == 2:
        return -beta * np.asarray(passage.hitting_prob_dxx(params, x, t)) + passage.scale_h_dxx(params, x, t)
    raise ValueError(f"order must be 0, 1 or 2, got {order}")


def envelope_shift(params: ModelParams, sol: BarrierSolution, beta: float, t: float, x):
    """``x - V0^{-1}(exp(-rho t) F(x))``; its minimum over ``x >= 0`` is ``u2 - u0``."""
    x = np.asarray(x, dtype=float)
    target = math.exp(-params.rho * t) * np.asarray(intervention_curve(params, beta, t, x))
    return x - v0_inverse_array(sol, target).reshape(x.shape)


def _envelope_slope(params, sol, beta, t, x):
    disc = math.exp(-params.rho * t)
    target = disc * np.asarray(intervention_curve(params, beta, t, x))
    z = v0_inverse_array(sol, target)
    return 1.0 - disc * np.asarray(intervention_curve(params, beta, t, x, 1)) / v0_eval(sol, z, 1)


def tangency_residuals(params: ModelParams, sol: BarrierSolution, beta: float, t: float, u1: float, u2: float):
    """Residuals of the value and slope touching conditions."""
    growth = math.exp(params.rho * t)
    s = u1 - u2 + sol.u0
    r_val = float(intervention_curve(params, beta, t, u1)) - growth * v0_eval(sol, s, 0)
    r_slope = float(intervention_curve(params, beta, t, u1, 1)) - growth * v0_eval(sol, s, 1)
    return r_val, r_slope


def asymptotic_seed(params: ModelParams, beta: float, t: float) -> tuple[float, float]:
    """Leading-order small-delay thresholds ``(sigma sqrt(t |ln t|), u0 - V0^{-1}(beta))``."""
    sol = solve_barrier(params)
    u1 = params.sigma * math.sqrt(t * abs(math.log(t)))
    return u1, sol.u0 - v0_inverse(sol, beta)


def _scan_grid(sol: BarrierSolution, params: ModelParams, t: float) -> np.ndarray:
    x_max = 2.0 * sol.u0 + 10.0 * params.sigma * math.sqrt(t)
    small = min(1e-6, 1e-3 * params.sigma * math.sqrt(t))
    grid = np.concatenate(([0.0], np.geomspace(small, x_max, 600), np.linspace(0.0, x_max, 600)))
    return np.unique(grid)


def _newton(params, sol, beta, t, u1, u2, max_iter=50):
    growth = math.exp(params.rho * t)
    scale = max(1.0, params.payout_level)

    def resid(a, b):
        return np.array(tangency_residuals(params, sol, beta, t, a, b))

    r = resid(u1, u2)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= 1e-14 * scale:
            return u1, u2, r
        s = u1 - u2 + sol.u0
        d1 = v0_eval(sol, s, 1)
        d2 = v0_eval(sol, s, 2)
        jac = np.array(
            [
                [float(intervention_curve(params, beta, t, u1, 1)) - growth * d1, growth * d1],
                [float(intervention_curve(params, beta, t, u1, 2)) - growth * d2, growth * d2],
            ]
        )
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        norm = np.max(np.abs(r))
        while lam > 1e-6:
            a, b = u1 + lam * step[0], u2 + lam * step[1]
            if a > 0.0:
                r_new = resid(a, b)
                if np.max(np.abs(r_new)) < norm or np.max(np.abs(r_new)) <= 1e-14 * scale:
                    break
            lam *= 0.5
        else:
            return u1, u2, r
        u1, u2, r = a, b, r_new
    return u1, u2, r


def solve_tangency(params: ModelParams, beta: float, delta: float) -> TangencySystem:
    """Solve the touching conditions for ``beta > beta(delta)``.

    A scan of the envelope shift locates the global touching point; damped
    Newton on the 2x2 system with analytic Jacobian polishes it.  If Newton
    stalls or lands on a non-global touch, the reduced one-dimensional slope
    condition is solved by bracketing instead.
    """
    sol = solve_barrier(params)
    grid = _scan_grid(sol, params, delta)
    shift = envelope_shift(params, sol, beta, delta, grid)
    i = int(np.argmin(shift))
    if i == 0 and _envelope_slope(params, sol, beta, delta, 0.0)[0] >= 0.0:
        raise SolverDivergence(f"beta={beta} does not exceed beta(Delta); no interior touching point")
    u1_seed = grid[i] if i > 0 else grid[1] * 0.5
    u2_seed = sol.u0 + float(envelope_shift(params, sol, beta, delta, u1_seed))
    scale = max(1.0, params.payout_level)

    out = _newton(params, sol, beta, delta, u1_seed, u2_seed)
    if out is not None:
        u1, u2, r = out
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        on_global = lo <= u1 <= hi or float(envelope_shift(params, sol, beta, delta, u1)) <= shift[i] + 1e-12 * scale
        if np.max(np.abs(r)) <= 1e-10 * scale and u1 > 0.0 and on_global:
            return TangencySystem(beta, delta, u1, u2, float(r[0]), float(r[1]), "newton")

    lo = grid[i - 1] if i > 0 else 0.0
    hi = grid[min(i + 1, grid.size - 1)]

    def slope(x):
        return float(_envelope_slope(params, sol, beta, delta, x)[0])

    if not (slope(lo) < 0.0 < slope(hi)):
        raise SolverDivergence(f"could not bracket the touching point for beta={beta}, delta={delta}")
    u1 = optimize.brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    u2 = sol.u0 + float(envelope_shift(params, sol, beta, delta, u1))
    r_val, r_slope = tangency_residuals(params, sol, beta, delta, u1, u2)
    return TangencySystem(beta, delta, u1, u2, r_val, r_slope, "bracket")


def u2_of_beta(params: ModelParams, beta: float, delta: float) -> float:
    if beta < 0.0 or delta <= 0.0:
        raise ValueError("need beta >= 0 and delta > 0")
    if beta <= beta_of_t(params, delta):
        return solve_barrier(params).u0
    return solve_tangency(params, beta, delta).u2


def u1_of_beta(params: ModelParams, beta: float, delta: float) -> float:
    if beta <= beta_of_t(params, delta):
        raise ValueError("u1 is defined only for beta > beta(delta)")
    return solve_tangency(params, beta, delta).u1


def classify_regime(params: ModelParams) -> Regime:
    sol = solve_barrier(params)
    # closed condition: equality belongs to the barrier-only regime
    if params.K >= params.payout_level - sol.u0 - beta_of_t(params, params.Delta):
        return Regime.BARRIER_ONLY
    return Regime.TWO_THRESHOLD


def solve_fixed_point(params: ModelParams) -> ThresholdSolution:
    """Classify the regime and, when two thresholds are optimal, solve ``beta + u2(beta) = mu/rho - K``."""
    sol = solve_barrier(params)
    level = params.payout_level
    b_delta = beta_of_t(params, params.Delta)
    delta0 = solve_delta0(params) if params.K < level - sol.u0 else None
    if classify_regime(params) is Regime.BARRIER_ONLY:
        return ThresholdSolution(Regime.BARRIER_ONLY, level - params.K - sol.u0, 0.0, sol.u0, delta0, b_delta, sol.u0)

    target = level - params.K
    cache: dict[float, TangencySystem] = {}

    def g(beta: float) -> float:
        if beta <= b_delta:
            return beta + sol.u0 - target
        ts = solve_tangency(params, beta, params.Delta)
        cache[beta] = ts
        return beta + ts.u2 - target

    lo, hi = b_delta, target
    while g(hi) <= 0.0:
        hi *= 2.0
    beta_star = optimize.brentq(g, lo, hi, xtol=1e-14 * level, rtol=4 * np.finfo(float).eps, maxiter=500)
    ts = cache.get(beta_star) or solve_tangency(params, beta_star, params.Delta)
    return ThresholdSolution(
        Regime.TWO_THRESHOLD,
        beta_star,
        ts.u1,
        ts.u2,
        delta0,
        b_delta,
        sol.u0,
        fixed_point_residual=beta_star + ts.u2 - target,
        tangency=ts,
    )


def u_hat_K(params: ModelParams) -> float:
    """Root of ``V0(z) = z + mu/rho - K - u0`` in ``(0, u0]``; the small-delay gap ``u0 - lim u2``."""
    sol = solve_barrier(params)
    c = params.payout_level - params.K - sol.u0
    if c <= 0.0:
        raise ValueError("needs K < mu/rho - u0")

    def q(z: float) -> float:
        return v0_eval(sol, z, 0) - z - c

    if q(sol.u0) == 0.0:
        return sol.u0
    return optimize.brentq(q, 0.0, sol.u0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class AsymptoticRow:
    delta: float
    u1: float
    u2: float
    scale: float
    u1_ratio: float
    u2_ratio: float
    regime: str


def asymptotic_check(params: ModelParams, deltas: Sequence[float]) -> list[AsymptoticRow]:
    """Small-delay ratios ``u1 / s`` and ``(u2 - (u0 - u_hat_K)) / s`` with ``s = sigma sqrt(D |ln D|)``."""
    sol = solve_barrier(params)
    u_hat = u_hat_K(params)
    rows = []
    for d in deltas:
        if d <= 0.0:
            raise ValueError("deltas must be positive")
        ts = solve_fixed_point(params.replace(Delta=d))
        s = params.sigma * math.sqrt(d * abs(math.log(d)))
        rows.append(
            AsymptoticRow(d, ts.u1, ts.u2, s, ts.u1 / s, (ts.u2 - (sol.u0 - u_hat)) / s, ts.regime.value)
        )
    return rows


def trends_to_one(ratios: Sequence[float]) -> bool:
    """``|r_k - 1|`` strictly decreasing along the sequence."""
    gaps = [abs(r - 1.0) for r in ratios]
    return all(b < a for a, b in zip(gaps, gaps[1:]))
