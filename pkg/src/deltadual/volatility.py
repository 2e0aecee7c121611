"""Local volatility surface a(x,t): ingestion, interpolation, delta-space view.

The tabulated form is a CSV whose header row is ``t, x1, x2, ...`` and whose
body rows are ``t_j, a(x1,t_j), ...``.  Values are absolute volatilities of
the arithmetic forward process (they multiply dW directly).  A closed-form
variant wraps a callable a(x,t) for parametric cases such as a(x,t) = sigma*x.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np


class SurfaceFormatError(ValueError):
    """Raised on malformed surface files, with row/column location."""


@dataclass(frozen=True)
class VolSurface:
    """Tabulated a(x,t) with bilinear interpolation, or a closed-form variant.

    Exactly one of (t_knots, x_knots, values) / func is populated.
    Tabulated surfaces require strictly increasing knots and positive,
    finite values.
    """

    t_knots: Optional[np.ndarray] = None
    x_knots: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    func: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    def __post_init__(self):
        if self.func is not None:
            if self.values is not None:
                raise ValueError("surface is either tabulated or closed-form, not both")
            return
        t = np.asarray(self.t_knots, dtype=float)
        x = np.asarray(self.x_knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if not (np.all(np.diff(t) > 0) and np.all(np.diff(x) > 0)):
            raise ValueError("surface knots must be strictly increasing")
        if v.shape != (t.size, x.size):
            raise ValueError(f"values shape {v.shape} != ({t.size}, {x.size})")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("surface values must be finite and positive")
        object.__setattr__(self, "t_knots", t)
        object.__setattr__(self, "x_knots", x)
        object.__setattr__(self, "values", v)

    @property
    def is_closed_form(self) -> bool:
        return self.func is not None


def from_function(fn: Callable[[np.ndarray, float], np.ndarray]) -> VolSurface:
    """Closed-form surface, e.g. lambda x, t: sigma * np.abs(x)."""
    return VolSurface(func=fn)


def load_surface(path) -> VolSurface:
    """Parse the CSV schema above into a validated VolSurface."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise SurfaceFormatError(f"{path}: first header cell must be 't'")
    try:
        x_knots = np.array([float(c) for c in rows[0][1:]])
    except ValueError as e:
        raise SurfaceFormatError(f"{path}: header row: {e}") from None
    t_knots, values = [], []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != x_knots.size + 1:
            raise SurfaceFormatError(
                f"{path}: row {i}: expected {x_knots.size + 1} cells, got {len(row)}")
        try:
            t_knots.append(float(row[0]))
            values.append([float(c) for c in row[1:]])
        except ValueError as e:
            raise SurfaceFormatError(f"{path}: row {i}: {e}") from None
    t_knots = np.array(t_knots)
    values = np.array(values)
    if np.any(np.diff(t_knots) <= 0):
        j = int(np.argmax(np.diff(t_knots) <= 0))
        raise SurfaceFormatError(f"{path}: row {j + 3}: t knots not increasing")
    if np.any(np.diff(x_knots) <= 0):
        j = int(np.argmax(np.diff(x_knots) <= 0))
        raise SurfaceFormatError(f"{path}: header column {j + 2}: x knots not increasing")
    bad = ~(np.isfinite(values) & (values > 0))
    if np.any(bad):
        i, j = map(int, np.argwhere(bad)[0])
        raise SurfaceFormatError(
            f"{path}: row {i + 2}, column {j + 2}: value must be finite and > 0, "
            f"got {values[i, j]}")
    return VolSurface(t_knots=t_knots, x_knots=x_knots, values=values)


def load_reference_surface() -> VolSurface:
    """The packaged 9x5 reference surface used by the experiments."""
    with resources.as_file(resources.files("deltadual.data") / "local_vol.csv") as p:
        return load_surface(p)


def shifted(s: VolSurface, dx: float) -> VolSurface:
    """Same surface expressed in x' = x - dx (knots move by -dx).

    Used to recenter a spot-level table onto forward-moneyness coordinates.
    """
    if s.is_closed_form:
        return from_function(lambda x, t: s.func(np.asarray(x) + dx, t))
    return VolSurface(t_knots=s.t_knots, x_knots=s.x_knots - dx, values=s.values)


def vol_at(s: VolSurface, x, t: float):
    """a(x,t) by bilinear interpolation, flat extrapolation outside the hull.

    Accepts scalar or array x; returns the matching shape.
    """
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)
    if s.is_closed_form:
        out = np.asarray(s.func(x_arr, float(t)), dtype=float)
    else:
        xc = np.clip(x_arr, s.x_knots[0], s.x_knots[-1])
        tc = float(np.clip(t, s.t_knots[0], s.t_knots[-1]))
        j = np.clip(np.searchsorted(s.t_knots, tc, side="right") - 1,
                    0, s.t_knots.size - 2)
        dt_cell = s.t_knots[j + 1] - s.t_knots[j]
        w = (tc - s.t_knots[j]) / dt_cell
        row = (1.0 - w) * s.values[j] + w * s.values[j + 1]
        out = np.interp(xc, s.x_knots, row)
    return float(out[0]) if scalar else out


def vol_hat(s: VolSurface, x_of_p: np.ndarray, t: float) -> np.ndarray:
    """a-hat(p,t): the surface composed with the current map x(p,t)."""
    x_of_p = np.asarray(x_of_p, dtype=float)
    if x_of_p.size == 0:
        return np.empty(0)
    return np.asarray(vol_at(s, x_of_p, t), dtype=float)
