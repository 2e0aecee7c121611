"""Discrete Legendre-Fenchel machinery between spot space and delta space.

The transform c*(p,t) = p x(p,t) - c(x(p,t),t) is evaluated on the grid of
interior deltas produced by the backward solve, which simultaneously gives
the map x(p,t); the inverse is the exact algebraic involution on nodes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .backward import PdeSolution, first_derivative
from .grid import Grid, apply, second_derivative_operator

DEFAULT_P_MIN = 1e-4
DEFAULT_GAMMA_FLOOR = 1e-8


@dataclass(frozen=True)
class LegendreFrame:
    """One time level in delta space: p grid, c*, map x(p)=c*_1, dual gamma."""

    p_grid: Grid
    c_star: np.ndarray
    x_map: np.ndarray
    c_star_gamma: np.ndarray
    t: float

    @property
    def p(self) -> np.ndarray:
        return self.p_grid.nodes


def to_dual(x_nodes: np.ndarray, values: np.ndarray, deltas: np.ndarray,
            gammas: np.ndarray, t: float = 0.0,
            p_min: float = DEFAULT_P_MIN,
            gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> LegendreFrame:
    """Transform one backward-solution level into delta space.

    The p grid is the interior deltas clipped to [p_min, 1 - p_min]; nodes
    must be strictly increasing there (otherwise the map x(p) would be
    multivalued and the level is rejected).  Dual gamma is 1/gamma, floored.
    """
    x_nodes = np.asarray(x_nodes, float)
    values = np.asarray(values, float)
    deltas = np.asarray(deltas, float)
    gammas = np.asarray(gammas, float)
    keep = np.flatnonzero((deltas > p_min) & (deltas < 1.0 - p_min))
    if keep.size < 3:
        raise ValueError(
            f"only {keep.size} deltas inside ({p_min}, {1 - p_min}); "
            "level too degenerate to transform")
    p = deltas[keep]
    bad = np.flatnonzero(np.diff(p) <= 0)
    if bad.size:
        raise ValueError(
            f"deltas not strictly increasing at interior index {keep[bad[0]]} "
            f"(delta {p[bad[0]]:.6g} -> {p[bad[0] + 1]:.6g}); map would be multivalued")
    x = x_nodes[keep]
    c_star = p * x - values[keep]
    dual_g = 1.0 / np.maximum(gammas[keep], gamma_floor)
    dual_g = np.maximum(dual_g, gamma_floor)
    return LegendreFrame(p_grid=Grid(p), c_star=c_star, x_map=x,
                         c_star_gamma=dual_g, t=t)


def frame_from_solution(sol: PdeSolution, level: int = 0,
                        p_min: float = DEFAULT_P_MIN,
                        gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> LegendreFrame:
    return to_dual(sol.grid.nodes, sol.values[level], sol.deltas[level],
                   sol.gammas[level], t=float(sol.times[level]),
                   p_min=p_min, gamma_floor=gamma_floor)


def from_dual(f: LegendreFrame) -> np.ndarray:
    """c(x_map[i]) = p_i x_i - c*_i; exact inverse of to_dual at nodes."""
    return f.p * f.x_map - f.c_star


def x_of_p(f: LegendreFrame) -> np.ndarray:
    """Recomputed map x(p,t) = c*_1(p,t) by central differences on the p grid."""
    return first_derivative(f.p, f.c_star)


def dual_gamma(f: LegendreFrame, gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> np.ndarray:
    """Stencil c*_11 on the p grid, floored below at gamma_floor.

    Boundary entries copy the nearest interior stencil value before flooring.
    """
    if gamma_floor <= 0:
        raise ValueError(f"gamma_floor must be positive, got {gamma_floor}")
    out = apply(second_derivative_operator(f.p_grid), f.c_star)
    out[0] = out[1]
    out[-1] = out[-2]
    return np.maximum(out, gamma_floor)


def p_of_x_integral(c_star_of_x: Callable[[float], float],
                    x_range: Sequence[float],
                    exclusion: float = 1e-6,
                    p_at_top: float = 1.0):
    """Reconstruct the map p(x) from a dual value given as a function of x.

    Integrates p(x) = c*(x)/x + int c*(x)/x^2 dx on the nodes of x_range by
    adaptive quadrature, fixing the constant so that p at the top node equals
    p_at_top (deep ITM delta).  An exclusion zone |x| < exclusion is skipped
    with flat continuation (the integrand vanishes there for the analytic
    example).  Returns (p array, monotone interpolant x(p)).
    """
    x = np.asarray(x_range, float)
    if np.any(np.diff(x) <= 0):
        raise ValueError("x_range must be strictly increasing")

    def integrand(s):
        return c_star_of_x(s) / (s * s)

    inc = np.zeros(x.size)
    for i in range(x.size - 1):
        a, b = x[i], x[i + 1]
        if a < -exclusion < exclusion < b:
            va, ea = quad(integrand, a, -exclusion, limit=200)
            vb, eb = quad(integrand, exclusion, b, limit=200)
            val, err = va + vb, ea + eb
        elif -exclusion <= a and b <= exclusion:
            val, err = 0.0, 0.0
        else:
            aa = min(max(a, exclusion), b) if a >= -exclusion else a
            bb = max(min(b, -exclusion), a) if b <= exclusion else b
            val, err = quad(integrand, aa, bb, limit=200)
        if not np.isfinite(val) or err > 1e-8 * (1.0 + abs(val)):
            raise ValueError(
                f"quadrature did not converge on [{a}, {b}] "
                f"(estimate {val}, error {err}); exclusion zone {exclusion}")
        inc[i + 1] = val
    integral = np.cumsum(inc)

    boundary = np.array([c_star_of_x(float(s)) / s if abs(s) > exclusion else 0.0
                         for s in x])
    p = boundary + integral
    p += p_at_top - p[-1]

    dp = np.diff(p)
    if np.all(dp > 0):
        inv = lambda q: np.interp(q, p, x)
    elif np.all(dp < 0):
        inv = lambda q: np.interp(q, p[::-1], x[::-1])
    else:
        inv = None
    return p, inv


def fenchel_gap(x_nodes: np.ndarray, values: np.ndarray,
                f: LegendreFrame) -> float:
    """max over node pairs of p_i x_j - c(x_j) - c*(p_i) (Young inequality check)."""
    gap = np.outer(f.p, x_nodes) - values[None, :] - f.c_star[:, None]
    return float(np.max(gap))


def export_csv(f: LegendreFrame, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "c_star", "x_map", "c_star_gamma", "t"])
        for i in range(f.p.size):
            w.writerow([f"{f.p[i]:.12g}", f"{f.c_star[i]:.12g}",
                        f"{f.x_map[i]:.12g}", f"{f.c_star_gamma[i]:.12g}",
                        f"{f.t:.10g}"])
