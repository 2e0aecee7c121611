"""Executable stability checks for the operator-exponential scheme.

Metzler structure of the scaled operator, spectral contraction of its
exponential, the uniform-grid discrete-Laplacian norm, the explicit-Euler
step bound and its relaxed version, and the Frechet-derivative bound.
All checks are reporting tools; none of them gate a solve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .grid import TridiagonalOperator, second_derivative_operator

DENSE_LIMIT = 512


@dataclass
class StabilityReport:
    """One solve's worth of diagnostic samples."""

    metzler_ok: bool = True
    spectral_norms: List[float] = field(default_factory=list)
    laplacian_norm: float = 0.0
    frechet_bound: float = 0.0
    euler_bound_dt: float = math.inf
    relaxed_bound_dt: float = math.inf
    notices: List[str] = field(default_factory=list)

    @property
    def spectral_norm_expM(self) -> Optional[float]:
        return max(self.spectral_norms) if self.spectral_norms else None

    def as_dict(self):
        return {
            "metzler_ok": bool(self.metzler_ok),
            "spectral_norm_expM": self.spectral_norm_expM,
            "laplacian_norm": self.laplacian_norm,
            "frechet_bound": self.frechet_bound,
            "euler_bound_dt": self.euler_bound_dt,
            "relaxed_bound_dt": self.relaxed_bound_dt,
            "notices": list(self.notices),
        }


def check_metzler(op: TridiagonalOperator, scale) -> bool:
    """True iff diag(scale) . op has nonpositive diagonal and nonnegative off-diagonals."""
    scale = np.asarray(scale, dtype=float)
    if np.any(scale < 0):
        raise ValueError("scale entries must be >= 0")
    if scale.ndim == 0:
        scale = np.full(op.n, float(scale))
    return bool(np.all(scale * op.main <= 0)
                and np.all((scale * op.lower)[1:] >= 0)
                and np.all((scale * op.upper)[:-1] >= 0))


def laplacian_norm(h: float, N: int) -> float:
    """Largest eigenvalue magnitude of the uniform Dirichlet Laplacian.

    (4/h^2) sin^2(N pi / (2(N+1))); tends to 4/h^2 as N grows.
    """
    if h <= 0:
        raise ValueError(f"need h > 0, got {h}")
    if N < 1:
        raise ValueError(f"need N >= 1, got {N}")
    return 4.0 / (h * h) * math.sin(N * math.pi / (2.0 * (N + 1))) ** 2


def spectral_contraction(op: TridiagonalOperator, scale) -> Optional[float]:
    """Spectral norm of the propagator exp{diag(scale) . op} on interior nodes.

    Measured in the scale-weighted inner product: exp{S A} is similar to
    exp{S^1/2 A S^1/2} via S^1/2, and the symmetrized exponent is negative
    definite on the Dirichlet interior, so the norm is < 1 for positive
    scale.  The raw 2-norm of the unsymmetrized matrix is not the right
    object for variable scale and can exceed 1.  None above the dense
    size limit.
    """
    if op.n > DENSE_LIMIT:
        return None
    from scipy.linalg import expm
    scale = np.asarray(scale, dtype=float)
    if scale.ndim == 0:
        scale = np.full(op.n, float(scale))
    root = np.sqrt(scale[1:-1])
    sym = root[:, None] * op.dense()[1:-1, 1:-1] * root[None, :]
    return float(np.linalg.norm(expm(sym), 2))


def stability_bounds(a_max: float, h: float, N: int, dt: float):
    """(euler_dt, relaxed_ok): explicit-Euler bound h^2/(2 a^2) vs dt < 1/(h a)^2."""
    if a_max < 0 or h <= 0 or N < 1 or dt <= 0:
        raise ValueError("a_max >= 0 and h, N, dt positive required")
    if a_max == 0.0:
        return math.inf, True
    euler_dt = h * h / (2.0 * a_max * a_max)
    relaxed_ok = dt < 1.0 / (h * a_max) ** 2
    return euler_dt, relaxed_ok


def frechet_bound(a_max: float, dt: float, h: float, N: int) -> float:
    """a^2 dt / ||Delta||: norm bound on the scheme's Frechet derivative."""
    return a_max * a_max * dt / laplacian_norm(h, N)


class DiagnosticsRecorder:
    """Opt-in per-solve observer; samples every `stride`-th step (default 10)."""

    def __init__(self, stride: int = 10):
        if stride < 1:
            raise ValueError(f"need stride >= 1, got {stride}")
        self.stride = stride
        self.report = StabilityReport()
        self._count = 0

    def observe(self, frame, s, dt: float, gamma_floor: float) -> None:
        from .forward import diffusion_coefficient

        self._count += 1
        if (self._count - 1) % self.stride:
            return
        op = second_derivative_operator(frame.p_grid)
        d = diffusion_coefficient(frame, s, frame.t, gamma_floor)
        scale = 0.5 * dt * d
        if not check_metzler(op, scale):
            self.report.metzler_ok = False
        norm = spectral_contraction(op, scale)
        if norm is None:
            if not self.report.notices:
                self.report.notices.append(
                    f"grid size {op.n} exceeds dense limit {DENSE_LIMIT}; "
                    "spectral norm skipped")
        else:
            self.report.spectral_norms.append(norm)
        h = float(np.min(np.diff(frame.p)))
        N = frame.p.size - 2
        a_max = float(np.sqrt(np.max(d)))
        self.report.laplacian_norm = laplacian_norm(h, max(N, 1))
        self.report.frechet_bound = frechet_bound(a_max, dt, h, max(N, 1))
        euler_dt, relaxed_ok = stability_bounds(a_max, h, max(N, 1), dt)
        self.report.euler_bound_dt = euler_dt
        self.report.relaxed_bound_dt = 1.0 / (h * a_max) ** 2 if a_max else math.inf
        if not relaxed_ok:
            self.report.notices.append(
                f"relaxed step bound violated at t={frame.t:.6g}: "
                f"dt={dt:.3e} >= {self.report.relaxed_bound_dt:.3e}")
