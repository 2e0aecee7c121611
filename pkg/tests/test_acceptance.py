"""The twelve release gates, one test per criterion.

Each test prints a single PASS/FAIL line (visible with -s or on failure) and
then asserts.  Criteria 8 and the rough-start half of 9 encode targets the
pinned self-consistent scheme does not reach on the reference surface; they
are asserted at their stated tolerances regardless, and their failure output
records the measured values.
"""

import numpy as np
import pytest

import deltadual as dd
from deltadual import analytic, diagnostics, forward, grid, legendre
from deltadual.backward import first_derivative
from deltadual.grid import Grid
from deltadual.legendre import LegendreFrame
from deltadual.volatility import from_function


def report(num, ok, detail):
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    return line


@pytest.fixture(scope="module")
def frame0_coarse(ref_surface):
    """Nonlinear-run initial frame on the moderately clustered grid.

    The linear experiment needs hard wing clustering (density 30) to resolve
    its terminal figure; the self-consistent runs use density 10, where the
    wings are not over-resolved relative to the information the iterate's
    own gamma carries there.
    """
    g = grid.build_clustered_grid(400, -60.0, 60.0, 0.0, 10.0)
    sol = dd.solve_backward(ref_surface, g, 1.0, 100)
    return dd.frame_from_solution(sol, level=0)


@pytest.fixture(scope="module")
def nonlinear_traj(ref_surface, frame0_coarse):
    """Reference nonlinear run: N=400/100 steps, smoothing on, eps=1e-8."""
    return dd.solve_forward_nonlinear(frame0_coarse, ref_surface, 1.0, 100, 1e-8,
                                      smoothing=True)


@pytest.fixture(scope="module")
def linear_traj(ref_surface, ref_backward, ref_frame0):
    return dd.solve_forward_linear(ref_frame0, ref_backward, ref_surface,
                                   1.0, 100, 1e-8)


@pytest.fixture(scope="module")
def rough_traj(ref_surface, frame0_coarse):
    """Same setup with smoothing off and eps=1e-5."""
    return dd.solve_forward_nonlinear(frame0_coarse, ref_surface, 1.0, 100, 1e-5,
                                      smoothing=False)


def test_criterion_01_stencil_order():
    def err(n):
        g = grid.build_uniform_grid(n + 1, 0.0, 1.0)
        f = np.sin(np.pi * g.nodes)
        r = grid.apply(grid.second_derivative_operator(g), f) + np.pi ** 2 * f
        return np.abs(r[1:-1]).max()

    order = np.log2(err(100) / err(200))
    msg = report(1, order >= 1.9, f"stencil order {order:.3f} (need >= 1.9)")
    assert order >= 1.9, msg


def test_criterion_02_metzler_contraction_sign():
    rng = np.random.default_rng(42)
    g = grid.build_uniform_grid(50, 0.0, 1.0)
    op = grid.second_derivative_operator(g)
    worst = 0.0
    ok = True
    for _ in range(100):
        scale = rng.uniform(1e-5, 1e-2, size=50)
        ok &= diagnostics.check_metzler(op, scale)
        norm = diagnostics.spectral_contraction(op, scale)
        worst = max(worst, norm)
        ok &= norm < 1.0
        v = -rng.uniform(0.0, 1.0, size=50)
        ok &= bool(np.all(grid.expm_apply(op, scale, v) <= 1e-12))
    msg = report(2, ok, f"100 random scales: max ||exp||_2 = {worst:.6f}, "
                        "Metzler + sign preservation")
    assert ok, msg


def test_criterion_03_laplacian_norm_oracle():
    worst = 0.0
    for N in (3, 10, 50):
        h = 1.0 / (N + 1)
        g = grid.build_uniform_grid(N + 2, 0.0, 1.0)
        dense = grid.second_derivative_operator(g).dense()[1:-1, 1:-1]
        lam = np.abs(np.linalg.eigvalsh(dense)).max()
        worst = max(worst, abs(diagnostics.laplacian_norm(h, N) - lam) / lam)
    msg = report(3, worst <= 1e-10, f"max relative gap {worst:.2e} (need <= 1e-10)")
    assert worst <= 1e-10, msg


def test_criterion_04_displaced_backward_validation():
    prm = analytic.DisplacedParams(sigma=0.5, K=100.0, T=1.0)
    s = from_function(lambda x, t: 0.5 * np.abs(x))
    g = grid.build_uniform_grid(400, -100.0, 300.0)
    sol = dd.solve_backward(s, g, 1.0, 100, payoff=lambda x: np.abs(x),
                            lower_bc=0.0, upper_bc=300.0)
    xm = g.nodes[1:-1]
    exact = np.array([analytic.displaced_call(float(x), 0.0, prm) for x in xm])
    mask = np.abs(xm) > 0.05 * prm.K
    rel = np.abs(sol.values[0][1:-1] - exact)[mask] / np.abs(exact[mask])
    msg = report(4, rel.max() <= 1e-3,
                 f"max relative error {rel.max():.2e} (need <= 1e-3)")
    assert rel.max() <= 1e-3, msg


def test_criterion_05_feynman_kac_residual_order():
    prm = analytic.DisplacedParams(sigma=0.5, K=100.0, T=1.0)

    def residual(h):
        worst = 0.0
        for x in (-60.0, -30.0, -10.0):
            for t in (0.2, 0.5, 0.8):
                cxx = (analytic.displaced_call(x + h, t, prm)
                       - 2 * analytic.displaced_call(x, t, prm)
                       + analytic.displaced_call(x - h, t, prm)) / h ** 2
                ct = (analytic.displaced_call(x, t + h / 100, prm)
                      - analytic.displaced_call(x, t - h / 100, prm)) / (h / 50)
                worst = max(worst, abs(ct + 0.5 * prm.sigma ** 2 * x * x * cxx))
        return worst

    order = np.log2(residual(1.0) / residual(0.5))
    msg = report(5, order >= 1.9, f"residual order {order:.3f} (need >= 1.9)")
    assert order >= 1.9, msg


def test_criterion_06_quadratic_ansatz_residual():
    prm = analytic.LiptonParams(lam=1.0, mubar=0.5)
    J = lambda a, b: analytic.lipton_solution(a, b, prm)
    worst = 0.0
    for xi in np.linspace(0.05, 1.0, 20):
        for Pi in np.linspace(-2.0, 3.0, 20):
            r = analytic.residual_nl1(J, float(xi), float(Pi), 0.5, 1e-4)
            worst = max(worst, r / max(1.0, abs(J(float(xi), float(Pi)))))
    ic = max(abs(J(0.0, Pi) - (Pi * Pi - Pi))
             for Pi in np.linspace(-2.0, 3.0, 20))
    ok = worst < 1e-6 and ic < 1e-12
    msg = report(6, ok, f"max relative residual {worst:.2e} (need < 1e-6), "
                        f"initial-condition gap {ic:.1e}")
    assert ok, msg


def test_criterion_07_legendre_machinery(ref_backward, ref_frame0):
    x = np.linspace(-3.0, 3.0, 201)
    c = np.log1p(np.exp(x))
    d = 1.0 / (1.0 + np.exp(-x))
    f = legendre.to_dual(x, c, d, d * (1.0 - d))
    keep = (d > legendre.DEFAULT_P_MIN) & (d < 1 - legendre.DEFAULT_P_MIN)
    rt = np.abs(legendre.from_dual(f) - c[keep]).max()
    gap = legendre.fenchel_gap(x, c, f)
    stencil = legendre.dual_gamma(ref_frame0)
    m = (ref_frame0.p > 0.05) & (ref_frame0.p < 0.95)
    recip = (np.abs(stencil[m] - ref_frame0.c_star_gamma[m])
             / ref_frame0.c_star_gamma[m]).max()
    ok = rt <= 1e-12 and gap <= 1e-10 and recip < 0.05
    msg = report(7, ok, f"roundtrip {rt:.1e} (<=1e-12), Fenchel gap {gap:.1e}, "
                        f"reciprocal-gamma {recip:.3f} (<0.05)")
    assert ok, msg


def test_criterion_08_nonlinear_terminal_ratio(frame0_coarse, nonlinear_traj):
    a0 = np.abs(frame0_coarse.c_star).max()
    at = np.abs(nonlinear_traj.frames[-1].c_star).max()
    ratio = at / a0
    cs = np.array([f.c_star for f in nonlinear_traj.frames])
    nonpos = bool(np.all(cs <= 1e-10))
    mono = bool(np.all(np.diff(np.abs(cs), axis=0) <= 1e-9))
    ok = ratio <= 0.01 and nonpos and mono
    msg = report(8, ok, f"terminal/initial ratio {ratio:.3f} (need <= 0.01), "
                        f"c*<=0 {nonpos}, per-node |c*| monotone {mono}")
    # known shortfall of the self-consistent gamma estimate near expiry: the
    # solution must extinguish like sqrt(T-t) but the floored/fitted gamma
    # feedback stalls the decay around 35%; asserted at the stated tolerance
    assert ok, msg


def test_criterion_09_iteration_counts(nonlinear_traj, rough_traj):
    steady = int(np.median(nonlinear_traj.report.counts[:50]))
    first_rough = rough_traj.report.counts[0]
    steady_rough = int(np.median(rough_traj.report.counts[:50]))
    ok_smooth = steady <= 5
    ok_rough = first_rough >= 50 and first_rough >= 10 * max(steady_rough, 1)
    ok = ok_smooth and ok_rough
    msg = report(9, ok, f"smoothing-on steady {steady} (<=5): "
                        f"{'ok' if ok_smooth else 'fail'}; smoothing-off "
                        f"first step {first_rough} vs steady {steady_rough} "
                        f"(need >=50 and >=10x): {'ok' if ok_rough else 'fail'}")
    # the rough-start half presumes a noisy initial gamma; our initial frame
    # comes from a converged backward solve and is already smooth, so the
    # first step converges immediately (see the linear ramp toward expiry
    # instead) - asserted as stated regardless
    assert ok, msg


def _single_peaked(v):
    ds = np.sign(np.diff(v[1:-1]))
    ds = ds[ds != 0]
    return int(np.count_nonzero(np.diff(ds) != 0)) <= 1


def test_criterion_10_delta_vol_shape(nonlinear_traj, linear_traj):
    ok = True
    worst = ""
    for name, traj in (("nonlinear", nonlinear_traj), ("linear", linear_traj)):
        for f, v in zip(traj.frames, traj.delta_vol):
            if f.t > 0.9:
                continue
            good = (v[0] == 0.0 and v[-1] == 0.0 and v.min() >= 0.0
                    and _single_peaked(v))
            if not good:
                ok = False
                worst = f"{name} t={f.t:.2f}"
    msg = report(10, ok, "v(p,t) zero-ended, nonnegative, single-peaked "
                         f"for t <= 0.9 in both runs{'' if ok else ': ' + worst}")
    assert ok, msg


def test_criterion_11_nonlinear_analytic_crosscheck():
    sigma, K = 0.1, 100.0
    s = from_function(lambda x, t: sigma * np.abs(x))
    p = np.linspace(0.05, 0.95, 61)
    c0 = dd.lipton_dual_frame(p, 0.0, sigma, lam=1.0, scale=K)
    frame0 = LegendreFrame(p_grid=Grid(p), c_star=c0,
                           x_map=first_derivative(p, c0),
                           c_star_gamma=np.full(p.size, 2.0 * K), t=0.0)

    def bc(t):
        e = dd.lipton_dual_frame(np.array([p[0], p[-1]]), t, sigma,
                                 lam=1.0, scale=K)
        return float(e[0]), float(e[1])

    traj = dd.solve_forward_nonlinear(frame0, s, 1.0, 100, 1e-10,
                                      smoothing=False, bc=bc)
    exact = dd.lipton_dual_frame(p, 1.0, sigma, lam=1.0, scale=K)
    m = np.abs(exact) > 1e-3 * K
    rel = np.abs((traj.frames[-1].c_star - exact)[m] / exact[m]).max()
    msg = report(11, rel <= 0.01, f"max relative error {rel:.2e} (need <= 1%)")
    assert rel <= 0.01, msg


def test_criterion_12_stability_margin(ref_surface, ref_frame0):
    a_max = float(ref_surface.values.max())
    h = float(np.min(np.diff(ref_frame0.p)))
    dt = 0.01
    _, relaxed_ok = diagnostics.stability_bounds(
        a_max, h, ref_frame0.p.size - 2, dt)
    margin = (1.0 / (h * a_max) ** 2) / dt
    ok = relaxed_ok and margin >= 1e4
    msg = report(12, ok, f"relaxed bound holds, margin {margin:.3g} (need >= 1e4)")
    assert ok, msg
