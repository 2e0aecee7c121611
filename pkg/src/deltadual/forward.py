"""Forward solvers in delta space.

Linear dual PDE: (1/2) v^2(p,t) c*_11 - c*_2 = 0 with v rebuilt from backward
gammas through the evolving map.  Nonlinear PDE: c*_2 c*_11 = (1/2) a-hat^2,
solved by Picard iteration on the operator-exponential step

    C(t+dt) = exp{ (dt/4) [D(t) + D(t+dt)] L } C(t),    D = (a-hat / c*_11)^2,

where L is the discrete second derivative.  The first iterate uses
exp{(dt/2) D(t) L}; each subsequent iterate recomputes D(t+dt) from its own
(optionally polynomial-smoothed) gamma and re-propagates C(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .backward import PdeSolution, first_derivative
from .grid import Grid, apply, expm_apply, pade11_step, second_derivative_operator
from .legendre import DEFAULT_GAMMA_FLOOR, LegendreFrame
from .volatility import VolSurface, vol_hat

MAX_PICARD_ITERATIONS = 1000


class DivergenceError(RuntimeError):
    """Picard iteration exceeded the cap; carries the residual history."""

    def __init__(self, message, residuals, partial=None):
        super().__init__(message)
        self.residuals = list(residuals)
        self.partial = partial


@dataclass
class IterationReport:
    """Per-step Picard iteration counts and sup-norm residual histories."""

    tolerance: float
    smoothing: bool
    counts: List[int] = field(default_factory=list)
    residuals: List[List[float]] = field(default_factory=list)


@dataclass
class ForwardTrajectory:
    """Frames at every time level plus the delta-process volatility per level."""

    frames: List[LegendreFrame]
    delta_vol: List[np.ndarray]
    report: IterationReport

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])


def smooth_gamma_poly4(p_nodes: Grid, c_star: np.ndarray,
                       gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> np.ndarray:
    """Second derivative of a least-squares quartic fit of c* over p, floored.

    Stencil gammas of the iterate are too rough to divide by; fitting the
    solution with a degree-4 polynomial and differentiating the fit twice
    gives a smooth replacement.
    """
    p = p_nodes.nodes if isinstance(p_nodes, Grid) else np.asarray(p_nodes, float)
    if p.size < 6:
        raise ValueError(f"need at least 6 nodes for a quartic fit, got {p.size}")
    # center/scale for conditioning
    mid = 0.5 * (p[0] + p[-1])
    span = 0.5 * (p[-1] - p[0])
    u = (p - mid) / span
    coeff = np.polynomial.polynomial.polyfit(u, c_star, deg=4)
    d2 = np.polynomial.polynomial.polyder(coeff, 2)
    gamma = np.polynomial.polynomial.polyval(u, d2) / (span * span)
    return np.maximum(gamma, gamma_floor)


def _stencil_gamma(op, c_star, gamma_floor):
    g = apply(op, c_star)
    g[0] = g[1]
    g[-1] = g[-2]
    return np.maximum(g, gamma_floor)


def diffusion_coefficient(frame: LegendreFrame, s: VolSurface, t: float,
                          gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> np.ndarray:
    """D(p,t) = [a-hat(c*_1(p,t), t) / c*_11(p,t)]^2 with the stored dual gamma."""
    x = first_derivative(frame.p, frame.c_star)
    a_hat = vol_hat(s, x, t)
    return (a_hat / np.maximum(frame.c_star_gamma, gamma_floor)) ** 2


def delta_vol_from_backward(sol: PdeSolution, frame: LegendreFrame,
                            s: VolSurface, t: float,
                            gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> np.ndarray:
    """v(p,t) from v^2 c*_11 = c_11(x(p,t),t) a^2(x(p,t),t).

    Backward gammas are interpolated in time between stored levels and
    monotone-cubic re-interpolated in x onto the frame's current map.
    """
    x = x_map_of(frame)
    gamma_b = _backward_gamma_at(sol, t, x)
    a = vol_hat(s, x, t)
    v2 = np.clip(gamma_b, 0.0, None) * a * a / np.maximum(frame.c_star_gamma,
                                                          gamma_floor)
    v = np.sqrt(np.clip(v2, 0.0, None))
    v[0] = v[-1] = 0.0
    return v


def x_map_of(frame: LegendreFrame) -> np.ndarray:
    """Map x(p,t) = c*_1 recomputed from the frame's own values."""
    return first_derivative(frame.p, frame.c_star)


def _backward_gamma_at(sol: PdeSolution, t: float, x: np.ndarray) -> np.ndarray:
    """Backward-lattice gamma at time t on arbitrary x, PCHIP in x, linear in t."""
    times = sol.times
    t = float(np.clip(t, times[0], times[-1]))
    j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
    w = (t - times[j]) / (times[j + 1] - times[j])
    gam = (1.0 - w) * sol.gammas[j] + w * sol.gammas[j + 1]
    # near-terminal levels hold delta-like gamma spikes whose slope ratios
    # overflow inside the monotone-cubic setup; the interpolant is still fine
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        interp = PchipInterpolator(sol.grid.nodes, gam, extrapolate=False)
        out = interp(np.clip(x, sol.grid.nodes[0], sol.grid.nodes[-1]))
    return np.nan_to_num(out, nan=0.0)


def step_linear_dual(frame: LegendreFrame, v: np.ndarray, dt: float,
                     propagator: str = "pade",
                     gamma_floor: float = DEFAULT_GAMMA_FLOOR) -> LegendreFrame:
    """One propagator step of the linear dual PDE with frozen v; boundaries fixed."""
    if dt <= 0:
        raise ValueError(f"need dt > 0, got {dt}")
    op = second_derivative_operator(frame.p_grid)
    prop = {"pade": pade11_step, "expm": expm_apply}[propagator]
    c_new = prop(op, 0.5 * dt * np.asarray(v, float) ** 2, frame.c_star)
    return LegendreFrame(p_grid=frame.p_grid, c_star=c_new,
                         x_map=first_derivative(frame.p, c_new),
                         c_star_gamma=_stencil_gamma(op, c_new, gamma_floor),
                         t=frame.t + dt)


def _picard(frame: LegendreFrame, d_of: Callable[[np.ndarray, float], np.ndarray],
            dt: float, eps: float, propagator: str, max_iter: int,
            bc: Optional[Callable[[float], tuple]] = None):
    """Shared Picard loop; d_of(c_star, t_eval) supplies the diffusion array.

    `bc(t)` optionally prescribes time-dependent Dirichlet endpoint values
    (the operator freezes boundaries over a step, so the endpoints are set
    to the midpoint values during propagation and to bc(t+dt) afterwards).
    """
    op = second_derivative_operator(frame.p_grid)
    prop = {"pade": pade11_step, "expm": expm_apply}[propagator]
    c0 = frame.c_star.copy()
    t_new = frame.t + dt
    if bc is not None:
        c0[0], c0[-1] = bc(frame.t + 0.5 * dt)

    def advance(scale):
        c = prop(op, scale, c0)
        if bc is not None:
            c[0], c[-1] = bc(t_new)
        return c

    d_old = d_of(frame.c_star, frame.t)
    c_prev = frame.c_star
    c_curr = advance(0.5 * dt * d_old)
    residuals = [float(np.max(np.abs(c_curr - c_prev)))]
    k = 1
    while residuals[-1] >= eps:
        if k >= max_iter:
            raise DivergenceError(
                f"Picard iteration did not converge in {max_iter} iterations "
                f"at t={frame.t:.6g} (last residual {residuals[-1]:.3e})",
                residuals)
        d_new = d_of(c_curr, t_new)
        c_next = advance(0.25 * dt * (d_old + d_new))
        residuals.append(float(np.max(np.abs(c_next - c_curr))))
        c_prev, c_curr = c_curr, c_next
        k += 1
    return c_curr, k, residuals


def picard_solve_step(frame: LegendreFrame, s: VolSurface, t: float, dt: float,
                      eps: float, smoothing: bool,
                      propagator: str = "pade",
                      gamma_floor: float = DEFAULT_GAMMA_FLOOR,
                      max_iter: int = MAX_PICARD_ITERATIONS,
                      bc: Optional[Callable[[float], tuple]] = None):
    """One nonlinear time step; returns (new frame, iteration count, residuals).

    D at the new level is recomputed every iteration from the iterate's own
    gamma (polynomial-smoothed when `smoothing`) and its recomputed map.
    """
    if eps <= 0 or dt <= 0:
        raise ValueError("eps and dt must be positive")
    op = second_derivative_operator(frame.p_grid)

    def gamma_of(cs):
        if smoothing:
            return smooth_gamma_poly4(frame.p_grid, cs, gamma_floor)
        return _stencil_gamma(op, cs, gamma_floor)

    def d_of(cs, t_eval):
        x = first_derivative(frame.p, cs)
        a_hat = vol_hat(s, x, t_eval)
        return (a_hat / gamma_of(cs)) ** 2

    c_new, k, residuals = _picard(frame, d_of, dt, eps, propagator, max_iter,
                                  bc=bc)
    new_frame = LegendreFrame(p_grid=frame.p_grid, c_star=c_new,
                              x_map=first_derivative(frame.p, c_new),
                              c_star_gamma=gamma_of(c_new), t=t + dt)
    return new_frame, k, residuals


def solve_forward_nonlinear(frame0: LegendreFrame, s: VolSurface, T: float,
                            steps: int, eps: float, smoothing: bool = True,
                            propagator: str = "pade",
                            gamma_floor: float = DEFAULT_GAMMA_FLOOR,
                            max_iter: int = MAX_PICARD_ITERATIONS,
                            diagnostics=None,
                            bc: Optional[Callable[[float], tuple]] = None
                            ) -> ForwardTrajectory:
    """Propagate c*_2 c*_11 = (1/2) a-hat^2 from frame0 to t = frame0.t + T."""
    report = IterationReport(tolerance=eps, smoothing=smoothing)
    frames = [frame0]
    dvols = [np.sqrt(diffusion_coefficient(frame0, s, frame0.t, gamma_floor))]
    dvols[0][0] = dvols[0][-1] = 0.0
    dt = T / steps
    frame = frame0
    for j in range(steps):
        t = frame0.t + j * dt
        try:
            frame, k, residuals = picard_solve_step(
                frame, s, t, dt, eps, smoothing, propagator, gamma_floor,
                max_iter, bc=bc)
        except DivergenceError as e:
            e.partial = ForwardTrajectory(frames=frames, delta_vol=dvols,
                                          report=report)
            raise
        report.counts.append(k)
        report.residuals.append(residuals)
        v = np.sqrt(diffusion_coefficient(frame, s, frame.t, gamma_floor))
        v[0] = v[-1] = 0.0
        frames.append(frame)
        dvols.append(v)
        if diagnostics is not None:
            diagnostics.observe(frame, s, dt, gamma_floor)
    return ForwardTrajectory(frames=frames, delta_vol=dvols, report=report)


def solve_forward_linear(frame0: LegendreFrame, sol: PdeSolution, s: VolSurface,
                         T: float, steps: int, eps: float,
                         smoothing: bool = True,
                         propagator: str = "pade",
                         gamma_floor: float = DEFAULT_GAMMA_FLOOR,
                         max_iter: int = MAX_PICARD_ITERATIONS,
                         diagnostics=None) -> ForwardTrajectory:
    """Linear dual solve with v rebuilt each iteration from backward gammas.

    The problem is still iterated per step because the map x(p,t) = c*_1
    entering the re-interpolation depends on the unknown level.
    """
    report = IterationReport(tolerance=eps, smoothing=smoothing)
    op = second_derivative_operator(frame0.p_grid)

    def gamma_of(cs):
        if smoothing:
            return smooth_gamma_poly4(frame0.p_grid, cs, gamma_floor)
        return _stencil_gamma(op, cs, gamma_floor)

    def v2_of(cs, t_eval):
        # v^2 c*_11 = gamma_b a^2 with c*_11 = 1/gamma_b (reciprocal-gamma
        # identity), so v = a gamma_b taken on the iterate's own map.  Using
        # the identity exactly, rather than dividing by an estimated dual
        # gamma, keeps v finite through the terminal curvature blow-up.
        x = first_derivative(frame0.p, cs)
        gamma_b = np.clip(_backward_gamma_at(sol, t_eval, x), 0.0, None)
        a = vol_hat(s, x, t_eval)
        return (a * gamma_b) ** 2

    frames = [frame0]
    v0 = np.sqrt(np.clip(v2_of(frame0.c_star, frame0.t), 0.0, None))
    v0[0] = v0[-1] = 0.0
    dvols = [v0]
    dt = T / steps
    frame = frame0
    for j in range(steps):
        try:
            c_new, k, residuals = _picard(frame, v2_of, dt, eps, propagator,
                                          max_iter)
        except DivergenceError as e:
            e.partial = ForwardTrajectory(frames=frames, delta_vol=dvols,
                                          report=report)
            raise
        frame = LegendreFrame(p_grid=frame0.p_grid, c_star=c_new,
                              x_map=first_derivative(frame0.p, c_new),
                              c_star_gamma=gamma_of(c_new), t=frame.t + dt)
        report.counts.append(k)
        report.residuals.append(residuals)
        v = np.sqrt(np.clip(v2_of(c_new, frame.t), 0.0, None))
        v[0] = v[-1] = 0.0
        frames.append(frame)
        dvols.append(v)
        if diagnostics is not None:
            diagnostics.observe(frame, s, dt, gamma_floor)
    return ForwardTrajectory(frames=frames, delta_vol=dvols, report=report)
