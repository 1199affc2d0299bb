"""Functions on a uniform dyadic grid of [0, 1].

Every function of space in the package (diffusion coefficient, drift,
densities, eigenfunctions, wavelets) is carried as a :class:`GridFn`: values
at the ``2**m + 1`` points ``x_i = i / 2**m``, endpoints included.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

DEFAULT_M = 10


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``2**m + 1`` points on [0, 1]."""

    m: int = DEFAULT_M

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"grid exponent must be >= 1, got {self.m}")

    @property
    def M(self) -> int:
        return 2**self.m + 1

    @property
    def h(self) -> float:
        return 2.0**-self.m

    @cached_property
    def x(self) -> np.ndarray:
        x = np.arange(self.M) * self.h
        x.setflags(write=False)
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid weights (including the spacing ``h``)."""
        w = np.full(self.M, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.setflags(write=False)
        return w

    def fn(self, f: Callable[[np.ndarray], np.ndarray] | float) -> "GridFn":
        """Tabulate a callable (or constant) on the grid."""
        if callable(f):
            vals = np.asarray(f(self.x), dtype=float)
            vals = np.broadcast_to(vals, (self.M,)).copy()
        else:
            vals = np.full(self.M, float(f))
        return GridFn(self, vals)

    def locate(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Cell index ``i`` and fractional offset ``t`` with ``x = (i + t) h``.

        ``i`` is clipped to ``[0, M - 2]`` so that ``x = 1`` maps to the last
        cell with ``t = 1``.
        """
        s = np.asarray(x, dtype=float) * 2**self.m
        i = np.clip(np.floor(s).astype(np.int64), 0, self.M - 2)
        return i, s - i


@dataclass(frozen=True, eq=False)
class GridFn:
    """Real-valued function tabulated on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.M,):
            raise ValueError(
                f"expected {self.grid.M} values, got array of shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFn values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def __call__(self, x) -> np.ndarray:
        """Piecewise-linear interpolation at arbitrary points of [0, 1]."""
        i, t = self.grid.locate(x)
        v = self.values
        return (1.0 - t) * v[i] + t * v[i + 1]

    def _binary(self, other, op):
        if isinstance(other, GridFn):
            _check_same_grid(self, other)
            other = other.values
        return GridFn(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return GridFn(self.grid, -self.values)

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridFn":
        return GridFn(self.grid, func(self.values))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def _check_same_grid(f: GridFn, g: GridFn) -> None:
    if f.grid != g.grid:
        raise ValueError(f"grid mismatch: m={f.grid.m} vs m={g.grid.m}")


def quadrature(f: GridFn) -> float:
    """Trapezoid approximation of the integral of ``f`` over [0, 1]."""
    return float(np.dot(f.grid.weights, f.values))


def primitive(f: GridFn) -> GridFn:
    """Cumulative trapezoid integral ``x -> int_0^x f``."""
    return GridFn(f.grid, cumulative_trapezoid(f.values, dx=f.grid.h, initial=0.0))


def derivative(f: GridFn) -> GridFn:
    """Second-order finite-difference derivative.

    Central differences in the interior, one-sided three-point stencils at the
    endpoints.
    """
    if f.grid.M < 3:
        raise ValueError("derivative needs at least 3 grid points")
    return GridFn(f.grid, np.gradient(f.values, f.grid.h, edge_order=2))


def l2_distance(f: GridFn, g: GridFn, a: float = 0.0, b: float = 1.0) -> float:
    """Trapezoid approximation of ``(int_a^b (f - g)^2)^(1/2)``.

    Endpoints ``a, b`` need not be grid points; the difference is linearly
    interpolated there.
    """
    _check_same_grid(f, g)
    if not (0.0 <= a < b <= 1.0):
        raise ValueError(f"need 0 <= a < b <= 1, got [{a}, {b}]")
    diff = f.values - g.values
    x = f.grid.x
    inside = (x > a) & (x < b)
    i, t = f.grid.locate(np.array([a, b]))
    ends = (1.0 - t) * diff[i] + t * diff[i + 1]
    xs = np.concatenate(([a], x[inside], [b]))
    ds = np.concatenate(([ends[0]], diff[inside], [ends[1]]))
    return float(np.sqrt(np.trapezoid(ds**2, xs)))


def write_csv(f: GridFn, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "value"])
        for xi, vi in zip(f.x, f.values):
            w.writerow([f"{xi:.17g}", f"{vi:.17g}"])


def read_csv(path: str | Path) -> GridFn:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    M = data.shape[0]
    m = int(round(np.log2(M - 1)))
    if 2**m + 1 != M:
        raise ValueError(f"{path}: {M} rows is not a dyadic grid size")
    grid = Grid(m)
    if not np.allclose(data[:, 0], grid.x, rtol=0, atol=1e-15):
        raise ValueError(f"{path}: x column does not match the dyadic grid")
    return GridFn(grid, data[:, 1])
