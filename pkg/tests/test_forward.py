import numpy as np
import pytest

import deltadual as dd
from deltadual import forward
from deltadual.backward import first_derivative
from deltadual.grid import Grid
from deltadual.legendre import LegendreFrame
from deltadual.volatility import from_function


def quadratic_dual_setup(sigma=0.1, K=100.0, n=61):
    """Exact quadratic solution of the nonlinear dual PDE under a = sigma|x|,
    with matching surface and time-dependent boundary values."""
    s = from_function(lambda x, t: sigma * np.abs(x))
    p = np.linspace(0.05, 0.95, n)
    c0 = dd.lipton_dual_frame(p, 0.0, sigma, lam=1.0, scale=K)
    frame0 = LegendreFrame(p_grid=Grid(p), c_star=c0,
                           x_map=first_derivative(p, c0),
                           c_star_gamma=np.full(p.size, 2.0 * K), t=0.0)

    def bc(t):
        ends = dd.lipton_dual_frame(np.array([p[0], p[-1]]), t, sigma,
                                    lam=1.0, scale=K)
        return float(ends[0]), float(ends[1])

    def exact(t):
        return dd.lipton_dual_frame(p, t, sigma, lam=1.0, scale=K)

    return s, frame0, bc, exact


def test_smooth_gamma_recovers_quadratic_curvature():
    p = Grid(np.linspace(0.1, 0.9, 41))
    c = 3.0 * p.nodes ** 2 + p.nodes - 2.0
    gam = forward.smooth_gamma_poly4(p, c)
    assert np.allclose(gam, 6.0, atol=1e-9)


def test_smooth_gamma_floors_concave_input():
    p = Grid(np.linspace(0.1, 0.9, 41))
    gam = forward.smooth_gamma_poly4(p, -p.nodes ** 2)
    assert gam.min() >= forward.DEFAULT_GAMMA_FLOOR


def test_smooth_gamma_needs_six_nodes():
    with pytest.raises(ValueError):
        forward.smooth_gamma_poly4(Grid(np.linspace(0, 1, 5)), np.zeros(5))


def test_diffusion_coefficient_shape(ref_surface, ref_frame0):
    d = forward.diffusion_coefficient(ref_frame0, ref_surface, 0.0)
    assert d.shape == ref_frame0.p.shape
    assert np.all(d > 0)


def test_step_linear_dual_moves_toward_zero(ref_surface, ref_frame0):
    v = np.full(ref_frame0.p.size, 0.2)
    f1 = forward.step_linear_dual(ref_frame0, v, 0.01)
    assert f1.t == pytest.approx(0.01)
    # diffusion of a negative convex bump erodes it toward zero
    assert np.abs(f1.c_star[1:-1]).max() < np.abs(ref_frame0.c_star[1:-1]).max()


def test_nonlinear_reproduces_exact_quadratic():
    s, frame0, bc, exact = quadratic_dual_setup()
    traj = dd.solve_forward_nonlinear(frame0, s, 1.0, 50, 1e-10,
                                      smoothing=False, bc=bc)
    err = np.abs(traj.frames[-1].c_star - exact(1.0))
    denom = np.abs(exact(1.0)).max()
    assert err.max() / denom < 5e-3
    assert len(traj.frames) == 51
    assert all(k >= 2 for k in traj.report.counts)


def test_nonlinear_second_order_in_time():
    s, frame0, bc, exact = quadratic_dual_setup()
    errs = []
    for steps in (25, 50):
        traj = dd.solve_forward_nonlinear(frame0, s, 1.0, steps, 1e-12,
                                          smoothing=False, bc=bc)
        # thin boundary layers from the frozen-endpoint step converge at a
        # lower rate; measure away from them
        errs.append(np.abs(traj.frames[-1].c_star - exact(1.0))[5:-5].max())
    assert np.log2(errs[0] / errs[1]) > 1.7


def test_smoothing_matches_stencil_on_quadratic_problem():
    # the exact solution is itself quadratic in p, so the quartic fit is
    # unbiased and both gamma estimators must agree
    s, frame0, bc, exact = quadratic_dual_setup(n=31)
    t1 = dd.solve_forward_nonlinear(frame0, s, 0.5, 20, 1e-10,
                                    smoothing=True, bc=bc)
    t2 = dd.solve_forward_nonlinear(frame0, s, 0.5, 20, 1e-10,
                                    smoothing=False, bc=bc)
    assert np.abs(t1.frames[-1].c_star - t2.frames[-1].c_star).max() < 1e-6


def test_divergence_error_carries_partial_trajectory():
    s, frame0, bc, _ = quadratic_dual_setup()
    with pytest.raises(forward.DivergenceError) as exc:
        dd.solve_forward_nonlinear(frame0, s, 1.0, 10, 1e-10,
                                   smoothing=False, bc=bc, max_iter=1)
    assert exc.value.partial is not None
    assert len(exc.value.residuals) >= 1


def test_iteration_report_structure():
    s, frame0, bc, _ = quadratic_dual_setup(n=31)
    traj = dd.solve_forward_nonlinear(frame0, s, 0.2, 10, 1e-8,
                                      smoothing=False, bc=bc)
    r = traj.report
    assert r.tolerance == 1e-8 and r.smoothing is False
    assert len(r.counts) == len(r.residuals) == 10
    for k, res in zip(r.counts, r.residuals):
        assert len(res) == k
        assert res[-1] < 1e-8


def test_linear_solver_terminal_decay(ref_surface, ref_backward, ref_frame0):
    traj = dd.solve_forward_linear(ref_frame0, ref_backward, ref_surface,
                                   1.0, 100, 1e-8)
    a0 = np.abs(ref_frame0.c_star).max()
    at = np.abs(traj.frames[-1].c_star).max()
    assert at / a0 < 0.01
    assert traj.times[-1] == pytest.approx(1.0)


def test_linear_solver_tracks_backward_transform(ref_surface, ref_backward,
                                                 ref_frame0):
    """Mid-horizon, the forward solve must agree with the transform of the
    backward solution at the same time level."""
    traj = dd.solve_forward_linear(ref_frame0, ref_backward, ref_surface,
                                   0.5, 50, 1e-8)
    ref = dd.frame_from_solution(ref_backward, level=50)
    p = ref_frame0.p
    ref_on_p = np.interp(p, ref.p, ref.c_star)
    err = np.abs(traj.frames[-1].c_star - ref_on_p).max()
    assert err / np.abs(ref_on_p).max() < 0.02


def test_delta_vol_zero_at_endpoints(ref_surface, ref_backward, ref_frame0):
    traj = dd.solve_forward_linear(ref_frame0, ref_backward, ref_surface,
                                   0.3, 30, 1e-8)
    for v in traj.delta_vol:
        assert v[0] == 0.0 and v[-1] == 0.0
        assert v.min() >= 0.0


def test_invalid_tolerance_rejected(ref_surface, ref_frame0):
    with pytest.raises(ValueError):
        forward.picard_solve_step(ref_frame0, ref_surface, 0.0, 0.01, -1.0, True)
