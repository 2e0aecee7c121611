"""Closed-form validators.

Black-Scholes pieces (zero rates), the displaced-lognormal solution built
from an up-and-out barrier call, its dual transform x*c1 - c in closed form,
and the quadratic-ansatz solution of the optimal-consumption equation
J_xi = (1/2) mubar^2 J_Pi^2 / J_PiPi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr


@dataclass(frozen=True)
class DisplacedParams:
    """dS = sigma (S - K) dW; x = S - K lives on (-K, inf)."""

    sigma: float
    K: float
    T: float

    def __post_init__(self):
        if self.sigma <= 0 or self.K <= 0 or self.T <= 0:
            raise ValueError("sigma, K, T must all be positive")


@dataclass(frozen=True)
class LiptonParams:
    """Quadratic-ansatz problem: lagrange multiplier and mubar = mu/sigma^2."""

    lam: float
    mubar: float


def norm_cdf(x: float) -> float:
    return float(ndtr(x))


def norm_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _d1(S: float, K: float, sigma: float, tau: float) -> float:
    return (math.log(S / K) + 0.5 * sigma * sigma * tau) / (sigma * math.sqrt(tau))


def bs_call(S: float, t: float, K: float, sigma: float, T: float) -> float:
    """Undiscounted Black-Scholes call (r = q = 0)."""
    if S < 0:
        raise ValueError(f"need S >= 0, got {S}")
    if t > T:
        raise ValueError(f"need t <= T, got t={t}, T={T}")
    tau = T - t
    if S == 0.0:
        return 0.0
    if K <= 0.0:
        return S
    if tau == 0.0 or sigma * math.sqrt(tau) == 0.0:
        return max(S - K, 0.0)
    d1 = _d1(S, K, sigma, tau)
    d2 = d1 - sigma * math.sqrt(tau)
    return S * norm_cdf(d1) - K * norm_cdf(d2)


def _uoc_bracket(S: float, K: float, sigma: float, tau: float) -> float:
    """S N(-d1(S,K)) = E[S_T 1(S_T < K)]: the truncated-payoff block of the
    barrier price (S minus the asset-or-nothing call)."""
    return S * norm_cdf(-_d1(S, K, sigma, tau))


def displaced_call(x: float, t: float, prm: DisplacedParams) -> float:
    """Piecewise closed-form solution of c_t = (1/2) sigma^2 x^2 c_xx.

    x > 0: c = x.  x <= 0: the up-and-out call with barrier K and strike 0
    written on y = -x (method of images), which vanishes at x = -K and is
    continuous at x = 0.  Note the terminal limit of the x < 0 branch is
    |x|, not 0: the branch solves the barrier problem, not the payoff x+.
    """
    sigma, K, T = prm.sigma, prm.K, prm.T
    if x <= -K:
        raise ValueError(f"x must lie in (-K, inf), got x={x}, K={K}")
    if t > T:
        raise ValueError(f"need t <= T, got t={t}")
    if x > 0.0:
        return x
    tau = T - t
    y = -x
    if y < 1e-10 * K:
        # method-of-images cancellation: pin the continuity value
        return 0.0
    if tau == 0.0:
        return y
    z = K * K / y
    return _uoc_bracket(y, K, sigma, tau) - (y / K) * _uoc_bracket(z, K, sigma, tau)


def displaced_delta(x: float, t: float, prm: DisplacedParams) -> float:
    """Exact first derivative c_1(x,t) of displaced_call."""
    sigma, K, T = prm.sigma, prm.K, prm.T
    if x <= -K:
        raise ValueError(f"x must lie in (-K, inf), got x={x}, K={K}")
    if x > 0.0:
        return 1.0
    tau = T - t
    if tau == 0.0 or -x < 1e-10 * K:
        return -1.0 if x < 0 else 1.0
    y = -x
    z = K * K / y
    st = sigma * math.sqrt(tau)

    def block_deriv(S):
        # d/dS of _uoc_bracket = N(-d1) - phi(d1)/(sigma sqrt(tau))
        d1 = _d1(S, K, sigma, tau)
        return norm_cdf(-d1) - norm_pdf(d1) / st

    dc_dy = (block_deriv(y)
             - _uoc_bracket(z, K, sigma, tau) / K
             + (K / y) * block_deriv(z))
    return -dc_dy


def displaced_cstar(x: float, t: float, prm: DisplacedParams) -> float:
    """Dual transform x*c_1(x,t) - c(x,t) of the displaced solution.

    Evaluated from the exact derivative of the barrier branch; zero for
    x >= 0.  Collapsing this into a single closed formula invites
    normalization slips, so the defining relation is evaluated directly.
    """
    if x >= 0.0:
        return 0.0
    return x * displaced_delta(x, t, prm) - displaced_call(x, t, prm)


def lipton_solution(xi: float, Pi: float, prm: LiptonParams) -> float:
    """J(xi, Pi) = a(xi) Pi^2 + b(xi) Pi + c(xi) with J(0, Pi) = Pi^2 - lam*Pi.

    Substituting the quadratic ansatz into J_xi = (1/2) mubar^2 J_Pi^2/J_PiPi
    and matching powers of Pi gives a' = mubar^2 a, b' = mubar^2 b,
    c' = (mubar^2/4) b^2 / a, hence
    a = e^{m xi}, b = -lam e^{m xi}, c = (lam^2/4)(e^{m xi} - 1), m = mubar^2.
    """
    if xi < 0:
        raise ValueError(f"need xi >= 0, got {xi}")
    m = prm.mubar * prm.mubar
    g = math.exp(m * xi)
    return g * Pi * Pi - prm.lam * g * Pi + 0.25 * prm.lam * prm.lam * (g - 1.0)


def residual_nl1(J: Callable[[float, float], float], xi: float, Pi: float,
                 mubar: float, h: float, floor: float = 1e-12) -> float:
    """|J_xi - (1/2) mubar^2 J_Pi^2 / J_PiPi| by central differences of step h."""
    j_xi = (J(xi + h, Pi) - J(xi - h, Pi)) / (2.0 * h) if xi >= h else \
        (J(xi + h, Pi) - J(xi, Pi)) / h
    j_p = (J(xi, Pi + h) - J(xi, Pi - h)) / (2.0 * h)
    j_pp = (J(xi, Pi + h) - 2.0 * J(xi, Pi) + J(xi, Pi - h)) / (h * h)
    if abs(j_pp) < floor:
        raise ValueError(f"J_PiPi = {j_pp} below floor {floor}; "
                         "convexity assumption violated at the test point")
    return abs(j_xi - 0.5 * mubar * mubar * j_p * j_p / j_pp)


def lipton_dual_frame(p: np.ndarray, t: float, sigma: float, lam: float = 1.0,
                      scale: float = 1.0) -> np.ndarray:
    """Quadratic exact solution of the displaced-model dual PDE on a p grid.

    c*_2 = (1/2) sigma^2 (c*_1)^2 / c*_11 is the consumption equation with
    mubar -> sigma and xi -> t, so scale * J(t, p) with lipton coefficients
    is an exact solution; the equation is homogeneous in the value scale.
    """
    prm = LiptonParams(lam=lam, mubar=sigma)
    return scale * np.array([lipton_solution(t, float(pi), prm) for pi in p])
