"""Spatial grids and discrete second-derivative operators.

The operator here is the three-point central stencil for d2/dx2 on a
possibly nonuniform grid, with zero boundary rows (boundary values are
frozen by every propagator built on top of it).  Two propagators are
provided: the exact dense matrix exponential and the Pade(1,1) step,
which is the Crank-Nicolson scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, solve_banded


@dataclass(frozen=True)
class Grid:
    """Strictly increasing 1D coordinate array (spot x or delta p)."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError(f"grid needs at least 3 nodes, got shape {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def steps(self) -> np.ndarray:
        """h_i = nodes[i] - nodes[i-1], length n-1."""
        return np.diff(self.nodes)


def build_uniform_grid(n: int, lo: float, hi: float) -> Grid:
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    return Grid(np.linspace(lo, hi, n))


def build_clustered_grid(n: int, lo: float, hi: float, center: float,
                         density: float) -> Grid:
    """Nonuniform grid concentrated around `center` via a sinh mapping.

    A uniform auxiliary grid in xi is mapped through
    x = center + sinh(xi)/k with k = density/(hi - lo); one node is
    pinned exactly at `center`.  Larger `density` clusters harder.
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if not (lo < center < hi):
        raise ValueError(f"center must lie inside (lo, hi), got {center}")
    if density <= 0:
        raise ValueError(f"density must be positive, got {density}")

    k = density / (hi - lo)
    a_lo = np.arcsinh((lo - center) * k)
    a_hi = np.arcsinh((hi - center) * k)
    # split the n-1 intervals between the two sides proportionally
    n_lo = int(round((n - 1) * (-a_lo) / (a_hi - a_lo)))
    n_lo = min(max(n_lo, 1), n - 2)
    n_hi = n - 1 - n_lo
    xi = np.concatenate([np.linspace(a_lo, 0.0, n_lo + 1)[:-1],
                         np.linspace(0.0, a_hi, n_hi + 1)])
    nodes = center + np.sinh(xi) / k
    nodes[0], nodes[n_lo], nodes[-1] = lo, center, hi
    return Grid(nodes)


@dataclass(frozen=True)
class TridiagonalOperator:
    """Three-band discrete operator with zero (Dirichlet-frozen) boundary rows.

    Band storage: lower[i], main[i], upper[i] are the entries of row i
    (lower[0] and upper[-1] are never referenced).  Interior rows hold the
    nonuniform central second-difference coefficients, so the main diagonal
    is nonpositive and off-diagonals are nonnegative (Metzler structure).
    """

    lower: np.ndarray
    main: np.ndarray
    upper: np.ndarray

    @property
    def n(self) -> int:
        return self.main.size

    def dense(self) -> np.ndarray:
        return (np.diag(self.main)
                + np.diag(self.lower[1:], -1)
                + np.diag(self.upper[:-1], 1))


def second_derivative_operator(g: Grid) -> TridiagonalOperator:
    """Central second-difference stencil on a nonuniform grid.

    Interior row i: 2/(h_i(h_i+h_{i+1})), -2/(h_i h_{i+1}),
    2/(h_{i+1}(h_i+h_{i+1})).  Boundary rows are zero.
    """
    h = g.steps
    n = g.n
    lower = np.zeros(n)
    main = np.zeros(n)
    upper = np.zeros(n)
    hi = h[:-1]       # h_i   for i = 1..n-2
    hip = h[1:]       # h_{i+1}
    lower[1:-1] = 2.0 / (hi * (hi + hip))
    main[1:-1] = -2.0 / (hi * hip)
    upper[1:-1] = 2.0 / (hip * (hi + hip))
    return TridiagonalOperator(lower=lower, main=main, upper=upper)


def apply(op: TridiagonalOperator, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product; boundary entries are zero."""
    v = np.asarray(v, dtype=float)
    if v.size != op.n:
        raise ValueError(f"length mismatch: operator {op.n}, vector {v.size}")
    out = op.main * v
    out[1:] += op.lower[1:] * v[:-1]
    out[:-1] += op.upper[:-1] * v[1:]
    return out


def _check_scale(op: TridiagonalOperator, scale) -> np.ndarray:
    scale = np.asarray(scale, dtype=float)
    if scale.ndim == 0:
        scale = np.full(op.n, float(scale))
    if scale.size != op.n:
        raise ValueError(f"scale length {scale.size} != operator size {op.n}")
    if not np.all(np.isfinite(scale)):
        raise ValueError("scale entries must be finite")
    if np.any(scale < 0):
        raise ValueError("scale entries must be >= 0")
    return scale


def expm_apply(op: TridiagonalOperator, scale, v: np.ndarray) -> np.ndarray:
    """exp{diag(scale) . op} v via the dense matrix exponential.

    Sign-preserving and contractive for any scale >= 0 (Metzler property).
    """
    scale = _check_scale(op, scale)
    v = np.asarray(v, dtype=float)
    if v.size != op.n:
        raise ValueError(f"length mismatch: operator {op.n}, vector {v.size}")
    if np.all(scale == 0):
        return v.copy()
    m = scale[:, None] * op.dense()
    return expm(m) @ v


def pade11_step(op: TridiagonalOperator, scale, v: np.ndarray) -> np.ndarray:
    """Pade(1,1) approximation of expm_apply (the Crank-Nicolson step).

    Solves (I - S A/2) w = (I + S A/2) v with S = diag(scale) by banded
    elimination; linear cost in the grid size.
    """
    scale = _check_scale(op, scale)
    v = np.asarray(v, dtype=float)
    if v.size != op.n:
        raise ValueError(f"length mismatch: operator {op.n}, vector {v.size}")
    half = 0.5 * scale
    rhs = v + half * apply(op, v)
    n = op.n
    ab = np.zeros((3, n))
    ab[0, 1:] = -(half * op.upper)[:-1]
    ab[1, :] = 1.0 - half * op.main
    ab[2, :-1] = -(half * op.lower)[1:]
    # Metzler structure with scale >= 0 makes the system strictly
    # diagonally dominant; singularity cannot occur.
    assert np.all(ab[1, :] > 0)
    return solve_banded((1, 1), ab, rhs)
