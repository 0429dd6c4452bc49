"""First-passage kernel of the drifted surplus and the absorbed mean ``h``.

``p(x, t) = P(tau_x < t)`` where ``tau_x`` is the first time the diffusion
started at ``x`` reaches 0.  ``h(x, t) = E[X(t ^ tau_x)]`` solves the same
backward equation with ``h(0, t) = 0``, ``h(x, 0) = x`` and satisfies
``h = x + mu t - mu * int_0^t p(x, s) ds``.

Both are evaluated in closed form from the two Gaussian terms of the Dirichlet
Green's function.  The upper tail is always computed with ``ndtr`` of a
negative argument (an ``erfc`` formulation), never as ``1 - ndtr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import log_ndtr, ndtr

from .model import ModelParams

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class KernelPoint:
    x: float
    t: float
    p: float
    dp_dx: float
    d2p_dx2: float


@dataclass(frozen=True)
class ScalePoint:
    x: float
    t: float
    h: float
    dh_dx: float


def _check(x, t):
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("x must be >= 0")
    if np.any(t <= 0.0):
        raise ValueError("t must be > 0")
    return x, t


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def _terms(params: ModelParams, x, t):
    """Shared pieces: sd, z1 = (x+mu t)/sd, z2 = (mu t - x)/sd, and the image weight.

    ``image = exp(-2 mu x / sigma^2) * Phi(z2)`` is formed in log space so that it
    stays accurate deep in the tail.
    """
    mu, sig = params.mu, params.sigma
    sd = sig * np.sqrt(t)
    z1 = (x + mu * t) / sd
    z2 = (mu * t - x) / sd
    image = np.exp(-2.0 * mu * x / sig**2 + log_ndtr(z2))
    dens = np.exp(-0.5 * z1 * z1) / _SQRT_2PI  # phi(z1) == exp(-2 mu x/s^2) phi(z2)
    return sd, z1, z2, image, dens


def hitting_prob(params: ModelParams, x, t):
    """``P(tau_x < t)`` for the diffusion absorbed at 0."""
    x, t = _check(x, t)
    _, z1, _, image, _ = _terms(params, x, t)
    # the two tails can sum to 1 + ulp near x = 0
    return _out(np.clip(ndtr(-z1) + image, 0.0, 1.0))


def hitting_prob_dx(params: ModelParams, x, t):
    x, t = _check(x, t)
    sd, _, _, image, dens = _terms(params, x, t)
    return _out(-2.0 * dens / sd - 2.0 * params.mu / params.sigma**2 * image)


def hitting_prob_dxx(params: ModelParams, x, t):
    x, t = _check(x, t)
    mu, s2 = params.mu, params.sigma**2
    sd, z1, _, image, dens = _terms(params, x, t)
    return _out(2.0 * z1 * dens / sd**2 + 2.0 * mu * dens / (s2 * sd) + 4.0 * mu**2 / s2**2 * image)


def hitting_prob_dt(params: ModelParams, x, t):
    """Density of ``tau_x`` at ``t``; equals ``A p`` by the backward equation."""
    x, t = _check(x, t)
    sd, _, _, _, dens = _terms(params, x, t)
    return _out(x / (t * sd) * dens)


def kernel_point(params: ModelParams, x: float, t: float) -> KernelPoint:
    return KernelPoint(
        float(x),
        float(t),
        hitting_prob(params, x, t),
        hitting_prob_dx(params, x, t),
        hitting_prob_dxx(params, x, t),
    )


def _scale_h_closed(params: ModelParams, x, t):
    sd, z1, z2, image, _ = _terms(params, x, t)
    mu = params.mu
    return (x + mu * t) * ndtr(z1) - (mu * t - x) * image


def _scale_h_dx_closed(params: ModelParams, x, t):
    mu, s2 = params.mu, params.sigma**2
    sd, z1, z2, image, dens = _terms(params, x, t)
    return ndtr(z1) + image * (1.0 + 2.0 * mu * (mu * t - x) / s2) + 2.0 * mu * t * dens / sd


def scale_h_dxx(params: ModelParams, x, t):
    """Second x-derivative of ``h``; equals ``-mu * int_0^t p_xx(x, s) ds`` (non-positive)."""
    x, t = _check(x, t)
    mu, s2 = params.mu, params.sigma**2
    sd, _, _, image, dens = _terms(params, x, t)
    out = -4.0 * mu**2 * t / s2 * dens / sd - 2.0 * mu / s2 * image * (2.0 + 2.0 * mu * (mu * t - x) / s2)
    return _out(out)


def scale_h_dt(params: ModelParams, x, t):
    """``dh/dt = mu (1 - p)``, read off directly from the time-integral representation."""
    return _out(params.mu * (1.0 - np.asarray(hitting_prob(params, x, t))))


def _quad(fun, a, b, tol):
    val, err, info = integrate.quad(fun, a, b, epsabs=tol, epsrel=1e-12, limit=400, full_output=1)[:3]
    if err > 10 * tol and err > 1e-12 * abs(val):
        raise QuadratureError(f"quadrature on [{a}, {b}] stopped with error estimate {err:.3e}")
    return val


def _scale_h_quadrature(params: ModelParams, x: float, t: float) -> float:
    tol = 1e-10 * (1.0 + t)
    if x == 0.0:
        return 0.0
    # substitution s = w^2 clusters nodes where p(x, .) switches on
    integral = _quad(lambda w: 2.0 * w * hitting_prob(params, x, w * w), 0.0, math.sqrt(t), tol)
    return x + params.mu * t - params.mu * integral


def _scale_h_dx_quadrature(params: ModelParams, x: float, t: float) -> float:
    tol = 1e-10 * (1.0 + t)
    # p_x(0, s) ~ -2/sqrt(2 pi sigma^2 s); with s = w^2 the integrand is bounded
    integral = _quad(lambda w: 2.0 * w * hitting_prob_dx(params, x, w * w), 0.0, math.sqrt(t), tol)
    return 1.0 - params.mu * integral


def scale_h(params: ModelParams, x, t, method: str = "closed"):
    """``h(x, t)``.

    ``method="closed"`` uses the Gaussian closed form (vectorised);
    ``method="quadrature"`` integrates the time representation adaptively
    (scalar only) and raises :class:`QuadratureError` on non-convergence.
    """
    x, t = _check(x, t)
    if method == "closed":
        return _out(_scale_h_closed(params, x, t))
    if method == "quadrature":
        return _scale_h_quadrature(params, float(x), float(t))
    raise ValueError(f"unknown method {method!r}")


def scale_h_dx(params: ModelParams, x, t, method: str = "closed"):
    x, t = _check(x, t)
    if method == "closed":
        return _out(_scale_h_dx_closed(params, x, t))
    if method == "quadrature":
        return _scale_h_dx_quadrature(params, float(x), float(t))
    raise ValueError(f"unknown method {method!r}")


def scale_point(params: ModelParams, x: float, t: float) -> ScalePoint:
    return ScalePoint(float(x), float(t), scale_h(params, x, t), scale_h_dx(params, x, t))


def scale_h_dx_sup(params: ModelParams, t):
    """``sup_x dh/dx(x, t) = dh/dx(0+, t)``, attained at the boundary because ``h`` is concave in ``x``.

    With ``z = mu sqrt(t) / sigma`` this is ``Phi(z) (2 + 2 z^2) + 2 z phi(z)``.
    """
    t = np.asarray(t, dtype=float)
    z = params.mu * np.sqrt(t) / params.sigma
    out = ndtr(z) * (2.0 + 2.0 * z * z) + 2.0 * z * np.exp(-0.5 * z * z) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


def scale_h_dx_envelope(params: ModelParams, t):
    """Small-time form ``1 + 4 mu sqrt(t) / sqrt(2 pi sigma^2)`` of ``sup_x dh/dx``.

    This is only the leading term: the true supremum ``scale_h_dx_sup`` exceeds
    it by ``mu^2 t / sigma^2 + O(t^{3/2})``, so it is not an upper bound.
    """
    return 1.0 + 4.0 * params.mu * np.sqrt(t) / math.sqrt(2.0 * math.pi * params.sigma**2)
