"""Piecewise value function, the intervention operator and the Bellman check.

Two-threshold regime::

    V(x) = exp(-rho D) [beta (1 - p(x, D)) + h(x, D)]   0 <= x <= u1
    V(x) = V0(x + u0 - u2)                              u1 <  x <= u2
    V(x) = x - u2 + mu/rho                              x  >  u2

In the barrier-only regime ``u1 = 0``, ``u2 = u0`` and the first branch is empty.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import passage
from .model import BarrierSolution, ModelParams, solve_barrier, v0_eval
from .thresholds import Regime, ThresholdSolution


class AssemblyError(RuntimeError):
    """Branches do not match in value or slope at a joint."""


@dataclass(frozen=True)
class PiecewiseValue:
    params: ModelParams
    regime: Regime
    u1: float
    u2: float
    beta: float
    barrier: BarrierSolution

    @property
    def intervention_level(self) -> float:
        """``mu/rho - u2 - K``: the post-delay reset value net of the target level."""
        return self.params.payout_level - self.u2 - self.params.K

    def _mv_branch(self, x, order):
        d = self.params.Delta
        disc = math.exp(-self.params.rho * d)
        b = self.beta
        if order == 0:
            return disc * (b * (1.0 - passage.hitting_prob(self.params, x, d)) + passage.scale_h(self.params, x, d))
        if order == 1:
            return disc * (-b * passage.hitting_prob_dx(self.params, x, d) + passage.scale_h_dx(self.params, x, d))
        return disc * (-b * passage.hitting_prob_dxx(self.params, x, d) + passage.scale_h_dxx(self.params, x, d))

    def _v0_branch(self, x, order):
        return v0_eval(self.barrier, x + self.barrier.u0 - self.u2, order)

    def _linear_branch(self, x, order):
        if order == 0:
            return x - self.u2 + self.params.payout_level
        return np.full_like(x, 1.0 if order == 1 else 0.0)

    def __call__(self, x, order: int = 0, side: str = "right"):
        """Evaluate ``V`` (order 0), ``V'`` or ``V''``.

        At the joint ``x = u1`` the second derivative jumps; ``side="left"``
        takes the intervention branch there, ``side="right"`` the ``V0`` branch.
        """
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        if np.any(x < 0.0):
            raise ValueError("V is defined for x >= 0")
        out = np.empty_like(x)
        if side == "left":
            low = x <= self.u1
        else:
            low = x < self.u1
        high = x > self.u2
        mid = ~low & ~high
        if np.any(low):
            out[low] = self._mv_branch(x[low], order)
        if np.any(mid):
            out[mid] = self._v0_branch(x[mid], order)
        if np.any(high):
            out[high] = self._linear_branch(x[high], order)
        return float(out[0]) if scalar else out

    def generator(self, x, side: str = "right"):
        """``(A - rho) V``.

        On the intervention branch this uses ``A p = p_t`` and ``A h = h_t = mu (1 - p)``
        so no second differences enter.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = self.params
        out = np.empty_like(x)
        low = x <= self.u1 if side == "left" else x < self.u1
        high = x > self.u2
        mid = ~low & ~high
        if np.any(low):
            xl = x[low]
            d = p.Delta
            pp = np.asarray(passage.hitting_prob(p, xl, d))
            pt = np.asarray(passage.hitting_prob_dt(p, xl, d))
            h = np.asarray(passage.scale_h(p, xl, d))
            out[low] = math.exp(-p.rho * d) * (
                -self.beta * pt + p.mu * (1.0 - pp) - p.rho * (self.beta * (1.0 - pp) + h)
            )
        if np.any(mid):
            out[mid] = (
                0.5 * p.sigma**2 * self._v0_branch(x[mid], 2)
                + p.mu * self._v0_branch(x[mid], 1)
                - p.rho * self._v0_branch(x[mid], 0)
            )
        if np.any(high):
            out[high] = -p.rho * (x[high] - self.u2)
        return out


def intervention_value(params: ModelParams, u2: float, x):
    """Closed-form ``MV(x) = exp(-rho D) {(mu/rho - u2 - K)(1 - p(x, D)) + h(x, D)}``.

    The inner supremum over the reset amount is attained where ``V' = 1``,
    i.e. the post-delay surplus is brought to ``u2``.
    """
    d = params.Delta
    level = params.payout_level - u2 - params.K
    return math.exp(-params.rho * d) * (
        level * (1.0 - np.asarray(passage.hitting_prob(params, x, d))) + passage.scale_h(params, x, d)
    )


def m_operator(params: ModelParams, v: PiecewiseValue, x):
    out = intervention_value(params, v.u2, x)
    return float(out) if np.ndim(out) == 0 else out


def assemble_value(
    params: ModelParams, thresholds: ThresholdSolution, check: bool = True, rtol: float = 1e-8
) -> PiecewiseValue:
    """Wire the branches together; verifies value and slope continuity at ``u1`` and ``u2``."""
    sol = solve_barrier(params)
    if thresholds.regime is Regime.BARRIER_ONLY:
        v = PiecewiseValue(params, thresholds.regime, 0.0, thresholds.u2, thresholds.beta_star, sol)
    else:
        v = PiecewiseValue(params, thresholds.regime, thresholds.u1, thresholds.u2, thresholds.beta_star, sol)
    if check:
        scale = max(1.0, params.payout_level)
        joints = [("u2", v.u2, v._v0_branch, v._linear_branch)]
        if v.u1 > 0.0:
            joints.append(("u1", v.u1, v._mv_branch, v._v0_branch))
        for name, xj, left, right in joints:
            xa = np.array([xj])
            for order in (0, 1):
                gap = abs(float(left(xa, order)[0]) - float(right(xa, order)[0]))
                if gap > rtol * scale:
                    raise AssemblyError(f"order-{order} mismatch {gap:.3e} at {name}={xj}")
        if abs(float(v(0.0))) > rtol * scale:
            raise AssemblyError(f"V(0) = {float(v(0.0))} != 0")
    return v


def perturbed_value(v: PiecewiseValue, u2_factor: float = 1.01) -> PiecewiseValue:
    """Same branch formulas with ``u2`` scaled; used as a negative control for the verifier."""
    return PiecewiseValue(v.params, v.regime, v.u1, v.u2 * u2_factor, v.beta, v.barrier)


@dataclass
class BellmanReport:
    grid: np.ndarray
    residual_a: float
    residual_b: float
    residual_c: float
    residual_d: float
    residual_e: float
    residual_c_left_u1: Optional[float]
    residual_c_right_u1: Optional[float]
    params: ModelParams
    u1: float
    u2: float
    tolerance: float
    worst_x: dict = field(default_factory=dict)

    @property
    def residuals(self) -> dict[str, float]:
        return {
            "a": self.residual_a,
            "b": self.residual_b,
            "c": self.residual_c,
            "d": self.residual_d,
            "e": self.residual_e,
        }

    @property
    def complementarity(self) -> float:
        """Largest normalized triple product ``|V - MV| |(A - rho)V| |V' - 1|`` (dimensionless)."""
        scale = self.params.payout_level
        return self.residual_e / scale

    @property
    def passed(self) -> bool:
        return all(r <= self.tolerance for r in self.residuals.values())

    def to_dict(self) -> dict:
        return {
            "residuals": self.residuals,
            "complementarity": self.complementarity,
            "residual_c_at_u1": {"left": self.residual_c_left_u1, "right": self.residual_c_right_u1},
            "grid_size": int(self.grid.size),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "u1": self.u1,
            "u2": self.u2,
            "worst_x": self.worst_x,
            "params": self.params.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def bellman_grid(u1: float, u2: float, n_uniform: int = 2048, n_refine: int = 64, span: float = 3.0) -> np.ndarray:
    """Uniform grid on ``[0, span*u2]`` plus geometric clusters within ``1e-3 u2`` of each joint."""
    x = [np.linspace(0.0, span * u2, n_uniform)]
    width = 1e-3 * u2
    offsets = np.geomspace(width * 1e-6, width, n_refine // 2)
    for joint in (u1, u2):
        if joint > 0.0:
            x.append(joint - offsets)
            x.append(joint + offsets)
            x.append(np.array([joint]))
    x = np.concatenate(x)
    return np.unique(x[x >= 0.0])


def bellman_verify(
    params: ModelParams,
    v: PiecewiseValue,
    grid: Optional[np.ndarray] = None,
    n_uniform: int = 2048,
    n_refine: int = 64,
    rel_tol: float = 1e-6,
) -> BellmanReport:
    """Worst-case violations of the five Bellman conditions on a grid.

    (a) ``|V(0)|``; (b) ``max(MV - V)``; (c) ``max (A - rho) V``; (d) ``max(1 - V')``;
    (e) ``max |V - MV| |(A - rho)V| |V' - 1|`` with each factor divided by its grid maximum.
    At ``u1`` the generator is reported one-sidedly from both branches.
    """
    if grid is None:
        grid = bellman_grid(v.u1, v.u2, n_uniform, n_refine)
    grid = np.asarray(grid, dtype=float)
    val = v(grid)
    slope = v(grid, 1)
    mv = np.asarray(m_operator(params, v, grid))
    gen = v.generator(grid)
    scale = params.payout_level

    res_a = abs(float(v(0.0)))
    res_b = float(np.max(mv - val))
    res_d = float(np.max(1.0 - slope))
    left_c = right_c = None
    gen_all = gen
    if v.u1 > 0.0:
        left_c = float(v.generator(np.array([v.u1]), side="left")[0])
        right_c = float(v.generator(np.array([v.u1]), side="right")[0])
        gen_all = np.concatenate([gen, [left_c, right_c]])
    res_c = float(np.max(gen_all))

    f1 = np.abs(val - mv)
    f2 = np.abs(gen)
    f3 = np.abs(slope - 1.0)
    norm = [max(float(np.max(f)), np.finfo(float).tiny) for f in (f1, f2, f3)]
    triple = (f1 / norm[0]) * (f2 / norm[1]) * (f3 / norm[2])
    res_e = float(np.max(triple)) * scale

    worst = {
        "b": float(grid[int(np.argmax(mv - val))]),
        "c": float(grid[int(np.argmax(gen))]),
        "d": float(grid[int(np.argmax(1.0 - slope))]),
        "e": float(grid[int(np.argmax(triple))]),
    }
    return BellmanReport(
        grid, res_a, res_b, res_c, res_d, res_e, left_c, right_c, params, v.u1, v.u2, rel_tol * scale, worst
    )


@dataclass(frozen=True)
class CurvatureJump:
    left_second: float
    right_second: float
    left_first: float
    right_first: float

    @property
    def gap(self) -> float:
        return self.left_second - self.right_second


def c2_jump_at_u1(params: ModelParams, v: PiecewiseValue) -> CurvatureJump:
    """One-sided second derivatives of ``V`` at ``u1`` from the analytic branch formulas."""
    if v.regime is not Regime.TWO_THRESHOLD or v.u1 <= 0.0:
        raise ValueError("the curvature jump exists only in the two-threshold regime")
    xa = np.array([v.u1])
    return CurvatureJump(
        float(v._mv_branch(xa, 2)[0]),
        float(v._v0_branch(xa, 2)[0]),
        float(v._mv_branch(xa, 1)[0]),
        float(v._v0_branch(xa, 1)[0]),
    )
