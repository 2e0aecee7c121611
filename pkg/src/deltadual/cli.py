"""Command-line harness: backward solve, linear/nonlinear forward solves,
and a quick analytic validation suite.  Every run writes CSV artifacts,
SVG plots, and a manifest sufficient to reproduce it.

Exit codes: 0 ok, 1 validation failure, 2 configuration error, 3 divergence.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import click
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import analytic, backward, diagnostics, forward, grid, legendre, volatility

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


@dataclass
class RunConfig:
    experiment: str = "ref_surface"
    surface: str = ""          # CSV path; empty -> packaged table
    n_space: int = 400
    n_time: int = 100
    T: float = 1.0
    K: float = 100.0
    spot: float = 100.0
    x_lo: float = -60.0
    x_hi: float = 60.0
    density: float = 30.0
    tolerance: float = 1e-8
    smoothing: bool = True
    propagator: str = "pade"
    diagnostics: bool = False
    out: str = "out"

    def validate(self):
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.n_space < 3 or self.n_time < 1:
            raise ValueError("n_space >= 3 and n_time >= 1 required")
        if self.T <= 0 or self.K <= 0:
            raise ValueError("T and K must be positive")
        if self.propagator not in ("pade", "expm"):
            raise ValueError(f"propagator must be pade or expm, got {self.propagator}")
        if self.surface and not Path(self.surface).exists():
            raise FileNotFoundError(f"surface file not found: {self.surface}")


def _load_config(config_path, overrides) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        with open(config_path) as fh:
            data = json.load(fh)
        unknown = set(data) - set(asdict(cfg))
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    cfg.validate()
    return cfg


def _surface(cfg: RunConfig) -> volatility.VolSurface:
    s = volatility.load_surface(cfg.surface) if cfg.surface \
        else volatility.load_reference_surface()
    # recenter onto forward-minus-strike coordinates
    return volatility.shifted(s, cfg.K)


def _outdir(cfg: RunConfig) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest(cfg: RunConfig, outdir: Path, extra=None):
    doc = {"config": asdict(cfg)}
    if extra:
        doc.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _line_plot(path, x, series, labels, xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=(6, 4))
    for y, lab in zip(series, labels):
        ax.plot(x, y, label=lab)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _heatmap(path, x, t, z, xlabel, title):
    fig, ax = plt.subplots(figsize=(6, 4))
    pc = ax.pcolormesh(x, t, z, shading="auto")
    fig.colorbar(pc, ax=ax)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("t")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _solve_backward(cfg: RunConfig, s):
    g = grid.build_clustered_grid(cfg.n_space, cfg.x_lo, cfg.x_hi, 0.0,
                                  cfg.density)
    return backward.solve_backward(s, g, cfg.T, cfg.n_time,
                                   propagator=cfg.propagator)


def _write_trajectory(traj, outdir: Path, tag: str):
    with open(outdir / f"{tag}_cstar.csv", "w") as fh:
        fh.write("t,p,c_star,x_map,delta_vol\n")
        for f, v in zip(traj.frames, traj.delta_vol):
            for i in range(f.p.size):
                fh.write(f"{f.t:.10g},{f.p[i]:.12g},{f.c_star[i]:.12g},"
                         f"{f.x_map[i]:.12g},{v[i]:.12g}\n")
    f0, fT = traj.frames[0], traj.frames[-1]
    _line_plot(outdir / f"{tag}_cstar.svg", f0.p,
               [f0.c_star, fT.c_star], ["t=0", "t=T"],
               "p", "c*", "dual value, initial vs terminal")
    tt = traj.times
    _heatmap(outdir / f"{tag}_delta_vol.svg", f0.p, tt,
             np.array(traj.delta_vol), "p", "delta-process volatility v(p,t)")
    _heatmap(outdir / f"{tag}_map.svg", f0.p, tt,
             np.array([f.x_map for f in traj.frames]), "p", "map x(p,t)")


def _forward_common(cfg: RunConfig, nonlinear: bool):
    s = _surface(cfg)
    outdir = _outdir(cfg)
    sol = _solve_backward(cfg, s)
    frame0 = legendre.frame_from_solution(sol, level=0)
    rec = diagnostics.DiagnosticsRecorder() if cfg.diagnostics else None
    if nonlinear:
        traj = forward.solve_forward_nonlinear(
            frame0, s, cfg.T, cfg.n_time, cfg.tolerance,
            smoothing=cfg.smoothing, propagator=cfg.propagator,
            diagnostics=rec)
        tag = "forward_nonlinear"
    else:
        traj = forward.solve_forward_linear(
            frame0, sol, s, cfg.T, cfg.n_time, cfg.tolerance,
            smoothing=cfg.smoothing, propagator=cfg.propagator,
            diagnostics=rec)
        tag = "forward_linear"
    _write_trajectory(traj, outdir, tag)
    extra = {"iterations": traj.report.counts,
             "tolerance": traj.report.tolerance,
             "smoothing": traj.report.smoothing}
    if rec is not None:
        extra["stability"] = rec.report.as_dict()
    _manifest(cfg, outdir, extra)
    return traj


_common_options = [
    click.option("--config", "config_path", type=click.Path(exists=True),
                 default=None, help="JSON config file; flags override it."),
    click.option("--experiment", default=None),
    click.option("--surface", default=None,
                 help="local-vol CSV (header t,x1,...); default: packaged table"),
    click.option("--n-space", type=int, default=None),
    click.option("--n-time", type=int, default=None),
    click.option("--tolerance", type=float, default=None),
    click.option("--smoothing/--no-smoothing", default=None),
    click.option("--propagator", type=click.Choice(["pade", "expm"]),
                 default=None),
    click.option("--diagnostics/--no-diagnostics", default=None),
    click.option("--out", default=None),
]


def _with_common(fn):
    for opt in reversed(_common_options):
        fn = opt(fn)
    return fn


def _config_or_die(config_path, kw) -> RunConfig:
    try:
        return _load_config(config_path, kw)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        click.echo(f"configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
def main():
    """Delta-space option pricing: backward, dual forward, and validation runs."""


@main.command("backward")
@_with_common
def cmd_backward(config_path, **kw):
    """Solve the primal backward PDE and dump the value/delta/gamma lattice."""
    cfg = _config_or_die(config_path, kw)
    s = _surface(cfg)
    outdir = _outdir(cfg)
    sol = _solve_backward(cfg, s)
    backward.export_csv(sol, outdir / "backward.csv")
    x = sol.grid.nodes
    _line_plot(outdir / "backward_value.svg", x,
               [sol.values[0], sol.values[-1]], ["t=0", "t=T"],
               "x", "c", "backward value")
    _line_plot(outdir / "backward_delta.svg", x, [sol.deltas[0]], ["t=0"],
               "x", "c_1", "delta at t=0")
    _line_plot(outdir / "backward_gamma.svg", x, [sol.gammas[0]], ["t=0"],
               "x", "c_11", "gamma at t=0")
    _manifest(cfg, outdir)
    click.echo(f"backward solve written to {outdir}")


@main.command("forward-linear")
@_with_common
def cmd_forward_linear(config_path, **kw):
    """Forward dual solve with v(p,t) rebuilt from the backward gammas."""
    cfg = _config_or_die(config_path, kw)
    try:
        traj = _forward_common(cfg, nonlinear=False)
    except forward.DivergenceError as e:
        click.echo(f"solver divergence: {e}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    click.echo(f"forward-linear solve written to {cfg.out}; "
               f"iterations per step: {traj.report.counts}")


@main.command("forward-nonlinear")
@_with_common
def cmd_forward_nonlinear(config_path, **kw):
    """Forward solve of the nonlinear dual PDE by Picard iteration."""
    cfg = _config_or_die(config_path, kw)
    try:
        traj = _forward_common(cfg, nonlinear=True)
    except forward.DivergenceError as e:
        click.echo(f"solver divergence: {e}", err=True)
        sys.exit(EXIT_DIVERGENCE)
    click.echo(f"forward-nonlinear solve written to {cfg.out}; "
               f"iterations per step: {traj.report.counts}")


@main.command("validate")
@click.option("--out", default="out")
def cmd_validate(out):
    """Run the quick analytic-oracle checks and write a results file."""
    results = []

    def check(name, fn):
        try:
            detail = fn()
            results.append({"name": name, "ok": True, "detail": detail})
        except Exception as e:  # noqa: BLE001 - report, don't crash
            results.append({"name": name, "ok": False, "detail": str(e)})

    check("stencil_order", _check_stencil_order)
    check("metzler_contraction", _check_metzler_contraction)
    check("laplacian_norm", _check_laplacian_norm)
    check("feynman_kac_residual", _check_fk_residual)
    check("quadratic_ansatz", _check_quadratic_ansatz)
    check("legendre_roundtrip", _check_legendre_roundtrip)
    check("stability_bounds", _check_stability_bounds)

    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "validate.json").write_text(json.dumps(results, indent=2) + "\n")
    ok = True
    for r in results:
        status = "PASS" if r["ok"] else "FAIL"
        click.echo(f"{status} {r['name']}: {r['detail']}")
        ok = ok and r["ok"]
    sys.exit(EXIT_OK if ok else EXIT_VALIDATION)


def _stencil_error(n):
    g = grid.build_uniform_grid(n + 1, 0.0, 1.0)
    f = np.sin(np.pi * g.nodes)
    exact = -np.pi ** 2 * f
    approx = grid.apply(grid.second_derivative_operator(g), f)
    return float(np.max(np.abs((approx - exact)[1:-1])))


def _check_stencil_order():
    e1, e2 = _stencil_error(100), _stencil_error(200)
    order = np.log2(e1 / e2)
    if order < 1.9:
        raise AssertionError(f"observed order {order:.3f} < 1.9")
    return f"order {order:.3f}"


def _check_metzler_contraction():
    rng = np.random.default_rng(0)
    g = grid.build_uniform_grid(50, 0.0, 1.0)
    op = grid.second_derivative_operator(g)
    worst = 0.0
    for _ in range(20):
        scale = rng.uniform(1e-4, 1e-2, size=50)
        if not diagnostics.check_metzler(op, scale):
            raise AssertionError("Metzler check failed")
        norm = diagnostics.spectral_contraction(op, scale)
        if norm >= 1.0:
            raise AssertionError(f"spectral norm {norm} >= 1")
        worst = max(worst, norm)
        v = -rng.uniform(0.0, 1.0, size=50)
        if np.any(grid.expm_apply(op, scale, v) > 1e-12):
            raise AssertionError("sign preservation failed")
    return f"max spectral norm {worst:.6f}"


def _check_laplacian_norm():
    worst = 0.0
    for N in (3, 10, 50):
        h = 1.0 / (N + 1)
        g = grid.build_uniform_grid(N + 2, 0.0, 1.0)
        dense = grid.second_derivative_operator(g).dense()[1:-1, 1:-1]
        lam = float(np.max(np.abs(np.linalg.eigvalsh(dense))))
        formula = diagnostics.laplacian_norm(h, N)
        rel = abs(lam - formula) / lam
        if rel > 1e-10:
            raise AssertionError(f"N={N}: relative gap {rel:.2e}")
        worst = max(worst, rel)
    return f"max relative gap {worst:.2e}"


def _check_fk_residual():
    prm = analytic.DisplacedParams(sigma=0.5, K=100.0, T=1.0)

    def residual(h):
        worst = 0.0
        for x in (-60.0, -30.0, -10.0):
            for t in (0.2, 0.5, 0.8):
                c_xx = (analytic.displaced_call(x + h, t, prm)
                        - 2 * analytic.displaced_call(x, t, prm)
                        + analytic.displaced_call(x - h, t, prm)) / h ** 2
                c_t = (analytic.displaced_call(x, t + h / 100, prm)
                       - analytic.displaced_call(x, t - h / 100, prm)) / (h / 50)
                worst = max(worst, abs(c_t + 0.5 * prm.sigma ** 2 * x * x * c_xx))
        return worst

    r1, r2 = residual(1.0), residual(0.5)
    order = np.log2(r1 / r2)
    if order < 1.9:
        raise AssertionError(f"residual order {order:.3f} < 1.9")
    return f"residual order {order:.3f}"


def _check_quadratic_ansatz():
    prm = analytic.LiptonParams(lam=1.0, mubar=0.5)
    worst = 0.0
    for xi in np.linspace(0.05, 1.0, 20):
        for Pi in np.linspace(-2.0, 3.0, 20):
            J = lambda a, b: analytic.lipton_solution(a, b, prm)
            r = analytic.residual_nl1(J, float(xi), float(Pi), prm.mubar, 1e-4)
            scale = max(1.0, abs(J(float(xi), float(Pi))))
            worst = max(worst, r / scale)
    if worst > 1e-6:
        raise AssertionError(f"max relative residual {worst:.2e} > 1e-6")
    return f"max relative residual {worst:.2e}"


def _check_legendre_roundtrip():
    x = np.linspace(-3.0, 3.0, 201)
    c = np.log1p(np.exp(x))     # smooth convex surrogate of x+
    d = 1.0 / (1.0 + np.exp(-x))
    gam = d * (1.0 - d)
    f = legendre.to_dual(x, c, d, gam)
    back = legendre.from_dual(f)
    keep = np.flatnonzero((d > legendre.DEFAULT_P_MIN)
                          & (d < 1 - legendre.DEFAULT_P_MIN))
    err = float(np.max(np.abs(back - c[keep])))
    if err > 1e-12:
        raise AssertionError(f"roundtrip error {err:.2e} > 1e-12")
    gap = legendre.fenchel_gap(x, c, f)
    if gap > 1e-10:
        raise AssertionError(f"Fenchel inequality violated by {gap:.2e}")
    return f"roundtrip error {err:.2e}, Fenchel gap {gap:.2e}"


def _check_stability_bounds():
    euler_dt, relaxed_ok = diagnostics.stability_bounds(0.5, 0.0025, 400, 0.01)
    if not relaxed_ok:
        raise AssertionError("relaxed bound should hold at reference parameters")
    margin = (1.0 / (0.0025 * 0.5) ** 2) / 0.01
    return f"euler_dt {euler_dt:.3g} yr, relaxed margin {margin:.3g}"


if __name__ == "__main__":
    main()
