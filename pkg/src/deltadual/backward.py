"""Primal backward solver for (1/2) a^2(x,t) c_11 + c_2 = 0, c(x,T) = x+.

Crank-Nicolson (Pade(1,1)) marching from T down to 0 with the coefficient
frozen at the midpoint of each step; values, deltas and gammas are stored
at every time level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import Grid, apply, expm_apply, pade11_step, second_derivative_operator
from .volatility import VolSurface, vol_at


@dataclass(frozen=True)
class PdeSolution:
    """Time-indexed stack of value/delta/gamma arrays on an x grid.

    times run from 0 to T; values[j] is the slice at times[j].
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray   # shape (steps+1, n)
    deltas: np.ndarray
    gammas: np.ndarray

    def level_at(self, t: float) -> int:
        """Index of the stored level closest to t."""
        return int(np.argmin(np.abs(self.times - t)))


def first_derivative(nodes: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Second-order first derivative on a nonuniform grid, one-sided at the ends."""
    n = nodes.size
    out = np.empty(n)
    h = np.diff(nodes)
    hi, hip = h[:-1], h[1:]
    out[1:-1] = (-hip / (hi * (hi + hip)) * f[:-2]
                 + (hip - hi) / (hi * hip) * f[1:-1]
                 + hi / (hip * (hi + hip)) * f[2:])
    # one-sided 3-point stencils at the boundaries
    h0, h1 = h[0], h[1]
    out[0] = (-(2 * h0 + h1) / (h0 * (h0 + h1)) * f[0]
              + (h0 + h1) / (h0 * h1) * f[1]
              - h0 / (h1 * (h0 + h1)) * f[2])
    hm, hl = h[-1], h[-2]
    out[-1] = ((2 * hm + hl) / (hm * (hm + hl)) * f[-1]
               - (hm + hl) / (hm * hl) * f[-2]
               + hm / (hl * (hm + hl)) * f[-3])
    return out


def second_derivative(nodes: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Central second derivative; boundary entries copy the nearest interior value.

    The solution is very sensitive to gamma accuracy, so boundary gammas are
    extrapolated from the first interior stencil rather than one-sided.
    """
    g = Grid(nodes)
    out = apply(second_derivative_operator(g), f)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def solve_backward(s: VolSurface, g: Grid, T: float, steps: int,
                   payoff: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   lower_bc: float = 0.0,
                   upper_bc: Optional[float] = None,
                   propagator: str = "pade") -> PdeSolution:
    """March the backward PDE from t=T to t=0 on a uniform time grid.

    The default terminal condition is the forward-call payoff x+ with
    far-field boundaries c=0 below and c=x above; both can be overridden
    (the displaced-lognormal barrier validation needs terminal |x| with an
    absorbing lower boundary).
    """
    if T <= 0:
        raise ValueError(f"need T > 0, got {T}")
    if steps < 1:
        raise ValueError(f"need steps >= 1, got {steps}")
    nodes = g.nodes
    op = second_derivative_operator(g)
    dt = T / steps
    prop = {"pade": pade11_step, "expm": expm_apply}[propagator]

    if payoff is None:
        payoff = lambda x: np.maximum(x, 0.0)
    if upper_bc is None:
        upper_bc = float(nodes[-1])

    c = np.asarray(payoff(nodes), dtype=float)
    # freeze the boundary values already at the terminal slice; otherwise a
    # payoff/boundary mismatch at a corner rings through the Pade(1,1) step
    c[0] = lower_bc
    c[-1] = upper_bc
    levels = [c.copy()]
    for j in range(steps):
        t_hi = T - j * dt
        t_mid = t_hi - 0.5 * dt
        a = np.asarray(vol_at(s, nodes, t_mid), dtype=float)
        scale = 0.5 * dt * a * a
        c = prop(op, scale, c)
        c[0] = lower_bc
        c[-1] = upper_bc
        levels.append(c.copy())
    values = np.array(levels[::-1])
    times = np.linspace(0.0, T, steps + 1)
    deltas = np.array([first_derivative(nodes, v) for v in values])
    gammas = np.array([second_derivative(nodes, v) for v in values])
    return PdeSolution(grid=g, times=times, values=values,
                       deltas=deltas, gammas=gammas)


def delta_gamma(sol: PdeSolution, level: int):
    """(delta, gamma) arrays of the stored values at one time level."""
    v = sol.values[level]
    nodes = sol.grid.nodes
    return first_derivative(nodes, v), second_derivative(nodes, v)


def residual_dual(sol: PdeSolution, v_of: Callable[[float, float], float],
                  gamma_floor: float = 1e-8) -> np.ndarray:
    """Sup-norm residual of c_2(x,tau) c_11 = (1/2) v^2(c_1, tau) per level.

    c_2 here is the time-to-maturity derivative, computed by finite
    differences across stored levels; nodes with gamma at or below the
    floor are excluded (the dual representation divides by gamma).
    """
    T = sol.times[-1]
    dt = sol.times[1] - sol.times[0]
    n_levels = sol.times.size
    out = np.zeros(n_levels)
    # d/dtau = -d/dt
    dct = np.gradient(sol.values, dt, axis=0)
    for j in range(n_levels):
        tau = T - sol.times[j]
        mask = sol.gammas[j][1:-1] > gamma_floor
        if not np.any(mask):
            out[j] = 0.0
            continue
        c2 = -dct[j][1:-1][mask]
        c11 = sol.gammas[j][1:-1][mask]
        c1 = sol.deltas[j][1:-1][mask]
        v2 = np.array([v_of(float(p), float(tau)) for p in c1]) ** 2
        out[j] = float(np.max(np.abs(c2 * c11 - 0.5 * v2)))
    return out


def export_csv(sol: PdeSolution, path) -> None:
    """One row per lattice point: t, x, value, delta, gamma."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "value", "delta", "gamma"])
        for j, t in enumerate(sol.times):
            for i, x in enumerate(sol.grid.nodes):
                w.writerow([f"{t:.10g}", f"{x:.10g}",
                            f"{sol.values[j, i]:.12g}",
                            f"{sol.deltas[j, i]:.12g}",
                            f"{sol.gammas[j, i]:.12g}"])
