"""Problem parameters and the classical dividend-barrier solution.

The uncontrolled surplus is ``dX = mu dt + sigma dW``.  ``V0`` is the solution
of ``(A - rho) V = 0`` on the whole line with ``V0(u0) = mu/rho`` and
``V0'(u0) = 1``, where ``u0`` is the unique barrier that makes ``V0(0) = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

PARAM_KEYS = ("mu", "sigma", "rho", "K", "Delta")


class InvalidParams(ValueError):
    """Raised when a parameter set violates the model's sign constraints."""


@dataclass(frozen=True)
class ModelParams:
    """The five scalars of a problem instance.

    Attributes
    ----------
    mu, sigma : drift and volatility of the surplus process.
    rho : discount rate.
    K : fixed cost of one capital issuance.
    Delta : delay between ordering and receiving capital.
    """

    mu: float
    sigma: float
    rho: float
    K: float = 0.0
    Delta: float = 1.0

    def __post_init__(self) -> None:
        for key in PARAM_KEYS:
            value = getattr(self, key)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise InvalidParams(f"{key} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise InvalidParams(f"{key} must be finite, got {value!r}")
            object.__setattr__(self, key, float(value))
        if self.mu <= 0.0:
            raise InvalidParams(f"mu must be > 0, got {self.mu}")
        if self.sigma <= 0.0:
            raise InvalidParams(f"sigma must be > 0, got {self.sigma}")
        if self.rho <= 0.0:
            raise InvalidParams(f"rho must be > 0, got {self.rho}")
        if self.K < 0.0:
            raise InvalidParams(f"K must be >= 0, got {self.K}")
        if self.Delta <= 0.0:
            raise InvalidParams(f"Delta must be > 0, got {self.Delta}")

    @property
    def payout_level(self) -> float:
        """``mu / rho``, the value of a perpetual stream of the drift."""
        return self.mu / self.rho

    def replace(self, **changes: float) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ModelParams":
        missing = [k for k in PARAM_KEYS if k not in data]
        if missing:
            raise InvalidParams(f"missing parameter(s): {', '.join(missing)}")
        return cls(**{k: data[k] for k in PARAM_KEYS})

    @classmethod
    def from_json(cls, source: str | Path) -> "ModelParams":
        """Parse a flat JSON object with keys mu, sigma, rho, K, Delta.

        ``source`` is a path to a file or a JSON string.
        """
        text = str(source)
        path = Path(text)
        if not text.lstrip().startswith("{") and path.exists():
            text = path.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidParams("parameter config must be a JSON object")
        return cls.from_mapping(data)


def _root_parts(mu: float, sigma: float, rho: float) -> tuple[float, float]:
    disc = math.sqrt(mu * mu + 2.0 * sigma * sigma * rho)
    # r1 written as 2 rho / (mu + disc) to avoid cancellation when mu^2 >> sigma^2 rho
    r1 = 2.0 * rho / (mu + disc) if mu + disc > 0 else disc / sigma**2
    r2 = (mu + disc) / (sigma * sigma)
    return r1, r2


def characteristic_roots(params: ModelParams) -> tuple[float, float]:
    """Return ``(r1, r2)`` with ``exp(r1 x)`` and ``exp(-r2 x)`` solving ``(A - rho) f = 0``."""
    return _root_parts(params.mu, params.sigma, params.rho)


@dataclass(frozen=True)
class BarrierSolution:
    """Closed-form ``V0`` in the basis shifted to the barrier.

    ``V0(x) = c1 * exp(r1 (x - u0)) + c2 * exp(-r2 (x - u0))``.  The shift keeps
    the exponents moderate on the working region ``[0, u0]``.
    """

    r1: float
    r2: float
    u0: float
    c1: float
    c2: float
    mu: float
    sigma: float
    rho: float

    def __call__(self, x, order: int = 0):
        return v0_eval(self, x, order)

    @property
    def slope_at_zero(self) -> float:
        return float(v0_eval(self, 0.0, 1))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def solve_barrier(params: ModelParams) -> BarrierSolution:
    r1, r2 = characteristic_roots(params)
    # ln[(rho + mu r2)/(rho - mu r1)] == 2 ln(r2/r1) by Vieta; the latter has no cancellation
    u0 = 2.0 * math.log(r2 / r1) / (r1 + r2)
    c1 = r2 / (r1 * (r1 + r2))
    c2 = -r1 / (r2 * (r1 + r2))
    return BarrierSolution(r1, r2, u0, c1, c2, params.mu, params.sigma, params.rho)


def v0_eval(sol: BarrierSolution, x, order: int = 0):
    """Evaluate ``V0`` or one of its first three derivatives at ``x`` (scalar or array)."""
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0, 1, 2 or 3, got {order}")
    s = np.asarray(x, dtype=float) - sol.u0
    a = sol.c1 * sol.r1**order * np.exp(sol.r1 * s)
    b = sol.c2 * (-sol.r2) ** order * np.exp(-sol.r2 * s)
    out = a + b
    return float(out) if out.ndim == 0 else out


def v0_inverse_array(sol: BarrierSolution, target, tol: float = 1e-15, max_iter: int = 200):
    """Vectorised inverse of ``V0`` on all of R (``V0`` is a bijection R -> R).

    Safeguarded Newton: a Newton step is taken only when it stays strictly inside
    the current bracket, otherwise the bracket is bisected.
    """
    y = np.atleast_1d(np.asarray(target, dtype=float))
    slope0 = sol.slope_at_zero
    level = sol.mu / sol.rho
    # V0 concave below u0 with V0(0)=0, convex above with slope >= 1
    lo = np.where(y < 0.0, y / slope0, 0.0)
    hi = np.where(y < 0.0, 0.0, np.maximum(sol.u0, y - level + sol.u0))
    hi = np.where((y >= 0.0) & (y <= level), sol.u0, hi)
    lo = lo - 1e-300
    hi = hi + 1e-12 * np.maximum(1.0, np.abs(hi))
    z = 0.5 * (lo + hi)
    scale = tol * np.maximum(1.0, np.abs(y))
    for _ in range(max_iter):
        f = v0_eval(sol, z, 0) - y
        f = np.atleast_1d(f)
        lo = np.where(f < 0.0, z, lo)
        hi = np.where(f >= 0.0, z, hi)
        d = np.atleast_1d(v0_eval(sol, z, 1))
        step = z - f / d
        ok = (step > lo) & (step < hi)
        z_new = np.where(ok, step, 0.5 * (lo + hi))
        done = (np.abs(f) <= scale) | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(z)))
        z = np.where(done, z, z_new)
        if np.all(done):
            break
    return z


def v0_inverse(sol: BarrierSolution, target: float) -> float:
    """Return the unique ``z`` with ``V0(z) = target`` for ``target >= 0``."""
    if target < 0.0:
        raise ValueError(f"target must be >= 0, got {target}")
    if target == 0.0:
        return 0.0
    return float(v0_inverse_array(sol, target)[0])


def v0_generator_residual(sol: BarrierSolution, x):
    """``(A - rho) V0`` evaluated from the analytic derivatives; identically zero in exact arithmetic."""
    return (
        0.5 * sol.sigma**2 * v0_eval(sol, x, 2)
        + sol.mu * v0_eval(sol, x, 1)
        - sol.rho * v0_eval(sol, x, 0)
    )
