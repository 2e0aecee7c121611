"""Delta-space option pricing: backward local-vol solver, Legendre-transform
machinery, and the nonlinear forward solver in delta coordinates."""

from .analytic import (DisplacedParams, LiptonParams, bs_call, displaced_call,
                       displaced_cstar, displaced_delta, lipton_dual_frame,
                       lipton_solution)
from .backward import PdeSolution, solve_backward
from .diagnostics import (DiagnosticsRecorder, StabilityReport, check_metzler,
                          laplacian_norm, spectral_contraction,
                          stability_bounds)
from .forward import (DivergenceError, ForwardTrajectory, IterationReport,
                      solve_forward_linear, solve_forward_nonlinear)
from .grid import (Grid, TridiagonalOperator, build_clustered_grid,
                   build_uniform_grid, expm_apply, pade11_step,
                   second_derivative_operator)
from .legendre import LegendreFrame, frame_from_solution, from_dual, to_dual
from .volatility import (SurfaceFormatError, VolSurface, from_function,
                         load_surface, load_reference_surface, shifted, vol_at, vol_hat)

__all__ = [
    "DisplacedParams", "LiptonParams", "bs_call", "displaced_call",
    "displaced_cstar", "displaced_delta", "lipton_dual_frame",
    "lipton_solution", "PdeSolution", "solve_backward",
    "DiagnosticsRecorder", "StabilityReport", "check_metzler",
    "laplacian_norm", "spectral_contraction", "stability_bounds",
    "DivergenceError", "ForwardTrajectory", "IterationReport",
    "solve_forward_linear", "solve_forward_nonlinear",
    "Grid", "TridiagonalOperator", "build_clustered_grid",
    "build_uniform_grid", "expm_apply", "pade11_step",
    "second_derivative_operator",
    "LegendreFrame", "frame_from_solution", "from_dual", "to_dual",
    "SurfaceFormatError", "VolSurface", "from_function", "load_surface",
    "load_reference_surface", "shifted", "vol_at", "vol_hat",
]

__version__ = "0.1.0"
