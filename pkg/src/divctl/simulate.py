"""Monte-Carlo returns of the epsilon-lump dividend strategies, with closed forms.

Two families are simulated:

``BarrierEps``
    Pay ``eps`` each time the surplus reaches ``u0`` (dropping it to ``u0 - eps``);
    ruin at 0.

``TwoThresholdEps``
    Pay ``eps`` at ``u2``; on reaching ``u1`` order capital, wait ``Delta`` with
    absorption at 0, then receive/pay ``X - u2 - K`` and restart from ``u2``.

Paths evolve by exact Gaussian increments.  Threshold crossings between grid
points are detected with the Brownian-bridge crossing probability, so no
first-order monitoring bias enters.  Each path draws from its own
counter-based stream keyed by ``(seed, path index)``; per-path results are
reduced in index order, so estimates are bit-identical regardless of the
number of worker threads.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numba
import numpy as np
from numba import njit, prange

from . import passage
from .model import ModelParams, solve_barrier, v0_eval
from .thresholds import ThresholdSolution
from .value import PiecewiseValue

THREADS_ENV = "DIVCTL_THREADS"


class PolicyKind(str, enum.Enum):
    BARRIER_EPS = "BarrierEps"
    TWO_THRESHOLD_EPS = "TwoThresholdEps"


class InvalidPolicy(ValueError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    epsilon: float
    u1: float
    u2: float
    Delta: float
    K: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise InvalidPolicy(f"epsilon must be > 0, got {self.epsilon}")
        if self.kind is PolicyKind.BARRIER_EPS:
            if self.u1 != 0.0:
                raise InvalidPolicy("barrier policy has no lower threshold")
            if not self.epsilon < self.u2:
                raise InvalidPolicy(f"need 0 < eps < u0, got eps={self.epsilon}, u0={self.u2}")
        else:
            if not 0.0 < self.u1 < self.u2:
                raise InvalidPolicy(f"need 0 < u1 < u2, got ({self.u1}, {self.u2})")
            if not self.epsilon < self.u2 - self.u1:
                raise InvalidPolicy(f"need 0 < eps < u2 - u1 = {self.u2 - self.u1}, got {self.epsilon}")

    @classmethod
    def barrier(cls, u0: float, epsilon: float, params: ModelParams) -> "PolicySpec":
        return cls(PolicyKind.BARRIER_EPS, epsilon, 0.0, u0, params.Delta, params.K)

    @classmethod
    def two_threshold(cls, u1: float, u2: float, epsilon: float, params: ModelParams) -> "PolicySpec":
        return cls(PolicyKind.TWO_THRESHOLD_EPS, epsilon, u1, u2, params.Delta, params.K)

    @classmethod
    def from_thresholds(cls, params: ModelParams, ts: ThresholdSolution, epsilon: float) -> "PolicySpec":
        if ts.u1 > 0.0:
            return cls.two_threshold(ts.u1, ts.u2, epsilon, params)
        return cls.barrier(ts.u2, epsilon, params)


@dataclass(frozen=True)
class StepControl:
    """Time-stepping knobs.

    Inside the band the step is ``(distance / (c sigma))^2`` clipped to
    ``[dt_min, dt_max]``.  The delay window is crossed in ``delay_steps``
    bridge-corrected steps.  ``horizon`` defaults to ``40 / rho``.
    """

    c: float = 3.0
    dt_min: float = 1e-7
    dt_max: float = 0.05
    delay_steps: int = 16
    horizon: Optional[float] = None


@dataclass
class SimulationEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int
    ruin_fraction: float
    horizon: float
    horizon_exhausted: int
    truncation_bound: float
    mean_dividend_events: float = 0.0
    mean_recapitalisations: float = 0.0

    @property
    def ci_half_width(self) -> float:
        """Half-width of the 95% normal confidence interval."""
        return 1.959963984540054 * self.std_error

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci_half_width"] = self.ci_half_width
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# --------------------------------------------------------------------------- #
# counter-based per-path stream (splitmix64)
# --------------------------------------------------------------------------- #

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _stream_key(seed, path):
    return _mix(_mix(np.uint64(seed)) ^ (np.uint64(path) * _GAMMA + np.uint64(0x2545F4914F6CDD1D)))


@njit(cache=True)
def _uniform(key, counter):
    # output i of the stream is mix(key + (i+1) * gamma): depends only on (key, i)
    z = _mix(key + (counter + np.uint64(1)) * _GAMMA)
    return ((z >> np.uint64(11)) + 0.5) * _INV53


@njit(cache=True)
def _normal(key, counter):
    u1 = _uniform(key, counter)
    u2 = _uniform(key, counter + np.uint64(1))
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def stream_uniforms(seed: int, path: int, n: int) -> np.ndarray:
    """First ``n`` uniforms of the stream for ``(seed, path)``; exposed for inspection."""
    key = _stream_key(np.uint64(seed), np.uint64(path))
    return np.array([_uniform(key, np.uint64(i)) for i in range(n)])


# --------------------------------------------------------------------------- #
# path kernel
# --------------------------------------------------------------------------- #

_KIND_BARRIER = 0
_KIND_TWO = 1
_KIND_EXIT = 2

# trace event codes
_EV_STEP = 0
_EV_DIVIDEND = 1
_EV_RECAP = 2
_EV_RUIN = 3


@njit(cache=True)
def _record(trace, n_rec, t, x, lsum, nsum):
    if n_rec < trace.shape[0]:
        trace[n_rec, 0] = t
        trace[n_rec, 1] = x
        trace[n_rec, 2] = lsum
        trace[n_rec, 3] = nsum
    return n_rec + 1


@njit(cache=True)
def _path(kind, x0, mu, sigma, rho, K, Delta, lower, upper, eps, horizon, c, dt_min, dt_max, n_delay, key, trace):
    """Simulate one path.

    Returns ``(payout, ruined, alive_x, n_div, n_recap, exit_side)``.  For the
    exit kind ``payout`` is the discount factor at exit and ``exit_side`` is
    +1 (upper), -1 (lower) or 0 (horizon).
    """
    cnt = np.uint64(0)
    two = np.uint64(2)
    s2 = sigma * sigma
    t = 0.0
    x = x0
    pay = 0.0
    lsum = 0.0
    n_div = 0
    n_recap = 0
    n_rec = 0
    record = trace.shape[0] > 0

    if x <= 0.0:
        return 0.0, True, 0.0, 0, 0, -1

    if kind == _KIND_EXIT:
        if x >= upper:
            return 1.0, False, x, 0, 0, 1
        if x <= lower:
            return 1.0, False, x, 0, 0, -1
    elif x >= upper:
        lump = x - upper + eps
        pay += lump
        lsum += lump
        n_div += 1
        x = upper - eps

    in_window = kind == _KIND_TWO and x <= lower
    if record:
        n_rec = _record(trace, n_rec, t, x, lsum, n_recap)

    while True:
        if in_window:
            h = Delta / n_delay
            sd = sigma * math.sqrt(h)
            for _ in range(n_delay):
                y = x + mu * h + sd * _normal(key, cnt)
                cnt += two
                u = _uniform(key, cnt)
                cnt += np.uint64(1)
                t += h
                if y <= 0.0 or u < math.exp(-2.0 * x * y / (s2 * h)):
                    if record:
                        n_rec = _record(trace, n_rec, t, 0.0, lsum, n_recap)
                    return pay, True, 0.0, n_div, n_recap, -1
                x = y
                if record:
                    n_rec = _record(trace, n_rec, t, x, lsum, n_recap)
            d = math.exp(-rho * t)
            # net issuance: capital in (negative) or surplus out, then reset to u2
            flow = x - upper - K
            pay += d * flow
            lsum += flow
            n_recap += 1
            # sitting at u2 triggers the dividend lump immediately
            pay += d * eps
            lsum += eps
            n_div += 1
            x = upper - eps
            in_window = False
            if record:
                n_rec = _record(trace, n_rec, t, x, lsum, n_recap)
            if t >= horizon:
                return pay, False, x, n_div, n_recap, 0
            continue

        if t >= horizon:
            return pay, False, x, n_div, n_recap, 0

        dist = min(x - lower, upper - x)
        dt = (dist / (c * sigma)) ** 2
        if dt < dt_min:
            dt = dt_min
        if dt > dt_max:
            dt = dt_max
        sd = sigma * math.sqrt(dt)
        y = x + mu * dt + sd * _normal(key, cnt)
        cnt += two
        u_up = _uniform(key, cnt)
        u_dn = _uniform(key, cnt + np.uint64(1))
        cnt += two
        t += dt
        var = s2 * dt
        up = y >= upper
        if not up:
            up = u_up < math.exp(-2.0 * (upper - x) * (upper - y) / var)
        dn = y <= lower
        if not dn:
            dn = u_dn < math.exp(-2.0 * (x - lower) * (y - lower) / var)
        if up and dn:
            # both boundaries inside one step: keep the side the endpoint favours
            if y - lower < upper - y:
                up = False
            else:
                dn = False

        if kind == _KIND_EXIT:
            if up:
                return math.exp(-rho * t), False, y, 0, 0, 1
            if dn:
                return math.exp(-rho * t), False, y, 0, 0, -1
            x = y
            continue

        if up:
            # lump paid at the crossing; the post-crossing increment stays in the bank
            d = math.exp(-rho * t)
            x = y - eps
            lump = eps
            if x >= upper:
                lump += x - upper + eps
                x = upper - eps
            pay += d * lump
            lsum += lump
            n_div += 1
            if record:
                n_rec = _record(trace, n_rec, t, x, lsum, n_recap)
            if x > lower:
                continue
            y = x
            dn = True
        if dn:
            if kind == _KIND_BARRIER:
                if record:
                    n_rec = _record(trace, n_rec, t, 0.0, lsum, n_recap)
                return pay, True, 0.0, n_div, n_recap, -1
            x = y
            in_window = True
            continue
        x = y
        if record:
            n_rec = _record(trace, n_rec, t, x, lsum, n_recap)


@njit(cache=True)
def _run_serial(kind, x0, mu, sigma, rho, K, Delta, lower, upper, eps, horizon, c, dt_min, dt_max, n_delay,
                seed, first, n, pay, ruined, alive_x, n_div, n_recap, side):
    empty = np.zeros((0, 4))
    for i in range(n):
        key = _stream_key(np.uint64(seed), np.uint64(first + i))
        r = _path(kind, x0, mu, sigma, rho, K, Delta, lower, upper, eps, horizon, c, dt_min, dt_max, n_delay,
                  key, empty)
        pay[i], ruined[i], alive_x[i], n_div[i], n_recap[i], side[i] = r


@njit(cache=True, parallel=True)
def _run_parallel(kind, x0, mu, sigma, rho, K, Delta, lower, upper, eps, horizon, c, dt_min, dt_max, n_delay,
                  seed, first, n, pay, ruined, alive_x, n_div, n_recap, side):
    empty = np.zeros((0, 4))
    for i in prange(n):
        key = _stream_key(np.uint64(seed), np.uint64(first + i))
        r = _path(kind, x0, mu, sigma, rho, K, Delta, lower, upper, eps, horizon, c, dt_min, dt_max, n_delay,
                  key, empty)
        pay[i], ruined[i], alive_x[i], n_div[i], n_recap[i], side[i] = r


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    return max(1, min(n, numba.config.NUMBA_NUM_THREADS))


def _simulate_raw(kind, params, lower, upper, eps, x0, n_paths, seed, control: StepControl, threads=None):
    if n_paths <= 0:
        raise ValueError(f"n_paths must be positive, got {n_paths}")
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    horizon = control.horizon if control.horizon is not None else 40.0 / params.rho
    pay = np.zeros(n_paths)
    ruined = np.zeros(n_paths, dtype=np.bool_)
    alive_x = np.zeros(n_paths)
    n_div = np.zeros(n_paths, dtype=np.int64)
    n_recap = np.zeros(n_paths, dtype=np.int64)
    side = np.zeros(n_paths, dtype=np.int64)
    threads = _thread_count() if threads is None else threads
    args = (
        kind, float(x0), params.mu, params.sigma, params.rho, params.K, params.Delta, float(lower), float(upper),
        float(eps), float(horizon), control.c, control.dt_min, control.dt_max, int(control.delay_steps),
        np.uint64(seed), 0, n_paths, pay, ruined, alive_x, n_div, n_recap, side,
    )
    if threads > 1:
        previous = numba.get_num_threads()
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
        try:
            _run_parallel(*args)
        finally:
            numba.set_num_threads(previous)
    else:
        _run_serial(*args)
    return horizon, pay, ruined, alive_x, n_div, n_recap, side


def simulate_policy(
    params: ModelParams,
    policy: PolicySpec,
    x0: float,
    n_paths: int,
    seed: int,
    control: StepControl = StepControl(),
    threads: Optional[int] = None,
) -> SimulationEstimate:
    """Estimate the discounted net payout of ``policy`` from ``x0``."""
    if x0 < 0.0:
        raise ValueError("x0 must be >= 0")
    if abs(policy.K - params.K) > 0 or abs(policy.Delta - params.Delta) > 0:
        raise InvalidPolicy("policy K/Delta disagree with params")
    kind = _KIND_BARRIER if policy.kind is PolicyKind.BARRIER_EPS else _KIND_TWO
    horizon, pay, ruined, alive_x, n_div, n_recap, _ = _simulate_raw(
        kind, params, policy.u1, policy.u2, policy.epsilon, x0, n_paths, seed, control, threads
    )
    mean = float(np.mean(pay))
    se = float(np.std(pay, ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("inf")
    alive = ~ruined
    exhausted = int(np.count_nonzero(alive))
    # V <= x + mu/rho for every admissible policy
    bound = 0.0
    if exhausted:
        bound = math.exp(-params.rho * horizon) * float(np.mean(np.where(alive, alive_x + params.payout_level, 0.0)))
    return SimulationEstimate(
        mean,
        se,
        n_paths,
        int(seed),
        float(np.mean(ruined)),
        float(horizon),
        exhausted,
        bound,
        float(np.mean(n_div)),
        float(np.mean(n_recap)),
    )


@dataclass
class ExitEstimate:
    w1: float
    w2: float
    w1_se: float
    w2_se: float
    n_paths: int
    seed: int


def simulate_exit_functionals(
    params: ModelParams,
    u1: float,
    u2: float,
    x: float,
    n_paths: int,
    seed: int,
    control: StepControl = StepControl(),
) -> ExitEstimate:
    """MC estimates of ``E[exp(-rho tau); exit at u1]`` and ``E[exp(-rho tau); exit at u2]``."""
    _, disc, _, _, _, _, side = _simulate_raw(_KIND_EXIT, params, u1, u2, 0.0, x, n_paths, seed, control)
    a = np.where(side == -1, disc, 0.0)
    b = np.where(side == 1, disc, 0.0)
    root = math.sqrt(n_paths)
    return ExitEstimate(
        float(a.mean()), float(b.mean()), float(a.std(ddof=1) / root), float(b.std(ddof=1) / root), n_paths, seed
    )


def trace_path(
    params: ModelParams,
    policy: PolicySpec,
    x0: float,
    seed: int,
    path: int = 0,
    control: StepControl = StepControl(),
    max_records: int = 200_000,
) -> np.ndarray:
    """Record ``(t, X, L, N)`` along one path (same stream as ``simulate_policy`` path ``path``)."""
    kind = _KIND_BARRIER if policy.kind is PolicyKind.BARRIER_EPS else _KIND_TWO
    horizon = control.horizon if control.horizon is not None else 40.0 / params.rho
    trace = np.full((max_records, 4), np.nan)
    key = _stream_key(np.uint64(seed), np.uint64(path))
    _path(kind, float(x0), params.mu, params.sigma, params.rho, params.K, params.Delta, policy.u1, policy.u2,
          policy.epsilon, float(horizon), control.c, control.dt_min, control.dt_max, int(control.delay_steps),
          key, trace)
    return trace[~np.isnan(trace[:, 0])]


def write_trace_csv(trace: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "X", "L", "N"])
        for t, x, l, n in trace:
            w.writerow([repr(float(t)), repr(float(x)), repr(float(l)), int(n)])


# --------------------------------------------------------------------------- #
# closed forms
# --------------------------------------------------------------------------- #


def veps_closed_form_barrier(params: ModelParams, epsilon: float, x0: float) -> float:
    """Return of the barrier epsilon-policy: ``V0(x) * eps / (V0(u0) - V0(u0 - eps))`` below ``u0``."""
    sol = solve_barrier(params)
    if not 0.0 < epsilon < sol.u0:
        raise InvalidPolicy(f"need 0 < eps < u0, got {epsilon}")
    if x0 <= 0.0:
        return 0.0
    slope = (params.payout_level - v0_eval(sol, sol.u0 - epsilon)) / epsilon
    if x0 < sol.u0:
        return v0_eval(sol, x0) / slope
    return x0 - sol.u0 + epsilon + v0_eval(sol, sol.u0 - epsilon) / slope


def exit_functionals(params: ModelParams, u1: float, u2: float, x):
    """``(w1, w2)``: discounted probabilities of leaving ``[u1, u2]`` through ``u1`` / ``u2``."""
    if not u1 < u2:
        raise ValueError("need u1 < u2")
    x = np.asarray(x, dtype=float)
    if np.any(x < u1) or np.any(x > u2):
        raise ValueError("x must lie in [u1, u2]")
    sol = solve_barrier(params)
    r1, r2 = sol.r1, sol.r2
    # basis bounded by 1 on the interval
    f = np.exp(r1 * (x - u2))
    g = np.exp(-r2 * (x - u1))
    f1 = math.exp(r1 * (u1 - u2))
    g2 = math.exp(-r2 * (u2 - u1))
    det = 1.0 - f1 * g2
    w2 = (f - f1 * g) / det
    w1 = (g - g2 * f) / det
    if x.ndim == 0:
        return float(w1), float(w2)
    return w1, w2


@dataclass(frozen=True)
class TwoThresholdReturn:
    value: float
    g_u2: float


def g_eps_u2(params: ModelParams, v: PiecewiseValue, epsilon: float) -> float:
    """``V_eps(u2) - V(u2)`` for the two-threshold epsilon-policy (always negative)."""
    u1, u2 = v.u1, v.u2
    if not 0.0 < epsilon < u2 - u1:
        raise InvalidPolicy(f"need 0 < eps < u2 - u1, got {epsilon}")
    num = -(float(v(u2)) - float(v(u2 - epsilon)) - epsilon)
    w1, w2 = exit_functionals(params, u1, u2, u2 - epsilon)
    carry = math.exp(-params.rho * params.Delta) * (1.0 - passage.hitting_prob(params, u1, params.Delta))
    return num / (1.0 - w2 - carry * w1)


def veps_closed_form_twothreshold(params: ModelParams, v: PiecewiseValue, epsilon: float, x0: float) -> float:
    """Return of the two-threshold epsilon-policy from ``x0``."""
    if x0 <= 0.0:
        return 0.0
    g2 = g_eps_u2(params, v, epsilon)
    u1, u2 = v.u1, v.u2
    carry = math.exp(-params.rho * params.Delta)
    if x0 >= u2:
        return float(v(x0)) + g2
    if x0 <= u1:
        return float(v(x0)) + carry * g2 * (1.0 - passage.hitting_prob(params, x0, params.Delta))
    g1 = carry * g2 * (1.0 - passage.hitting_prob(params, u1, params.Delta))
    w1, w2 = exit_functionals(params, u1, u2, x0)
    return float(v(x0)) + g2 * w2 + g1 * w1
