"""Rectangular lattices standing in for R^n, functions on them, and stencils.

Lattice points are ordered row-major (last axis fastest).  Coordinates along
axis i are ``a_i + k * h_i`` exactly, so nested refinements and scaled grids
line up bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError, GridMismatch

__all__ = [
    "Grid", "GridFunction", "BumpSpec", "LinearOperator", "make_grid", "bump",
    "inner", "norm", "diff_operator", "DENSE_LIMIT",
]

DENSE_LIMIT = 5000


@dataclass(frozen=True)
class Grid:
    bounds: tuple
    counts: tuple

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return tuple(self.counts)

    @property
    def total(self) -> int:
        return math.prod(self.counts)

    @cached_property
    def spacing(self) -> tuple:
        return tuple((b - a) / (N - 1) for (a, b), N in zip(self.bounds, self.counts))

    @cached_property
    def cell_volume(self) -> float:
        return math.prod(self.spacing)

    @cached_property
    def axes(self) -> tuple:
        return tuple(a + np.arange(N) * h
                     for (a, _), N, h in zip(self.bounds, self.counts, self.spacing))

    @cached_property
    def points(self) -> np.ndarray:
        """All lattice points, shape (total, n)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=-1)

    def refined(self) -> "Grid":
        """Same bounds with every spacing halved (old points are kept)."""
        return Grid(self.bounds, tuple(2 * N - 1 for N in self.counts))


def make_grid(bounds: Sequence[Sequence[float]], counts: Sequence[int] | int) -> Grid:
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    if isinstance(counts, (int, np.integer)):
        counts = (int(counts),) * len(bounds)
    counts = tuple(int(N) for N in counts)
    if len(counts) != len(bounds):
        raise ConfigError(f"{len(counts)} counts for {len(bounds)} axes", "counts")
    for i, ((a, b), N) in enumerate(zip(bounds, counts)):
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise ConfigError(f"axis {i + 1}: need finite a < b, got [{a}, {b}]", "bounds")
        if N < 3:
            raise ConfigError(f"axis {i + 1}: need at least 3 points, got {N}", "counts")
    return Grid(bounds, counts)


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex).reshape(-1)
        if vals.size != self.grid.total:
            raise GridMismatch(f"{vals.size} values for a grid of {self.grid.total} points")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", vals)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def norm(self) -> float:
        return norm(self)

    def _check(self, other):
        if other.grid != self.grid:
            raise GridMismatch("grid functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)


@dataclass(frozen=True)
class BumpSpec:
    center: tuple
    radius: tuple


def _psi(t):
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def bump(g: Grid, spec: BumpSpec) -> GridFunction:
    """Product of ``exp(-1/(1-t^2))`` factors, zero outside the support box."""
    center = tuple(float(c) for c in spec.center)
    radius = tuple(float(r) for r in spec.radius)
    if len(radius) == 1 and g.n > 1:
        radius = radius * g.n
    if len(center) != g.n or len(radius) != g.n:
        raise ConfigError(f"bump needs {g.n} center and radius entries", "bump")
    for i, (c, r, (a, b), h) in enumerate(zip(center, radius, g.bounds, g.spacing)):
        if not r > 0:
            raise ConfigError(f"axis {i + 1}: bump radius must be positive", "bump")
        if c - r < a + 2 * h or c + r > b - 2 * h:
            raise ConfigError(
                f"axis {i + 1}: support [{c - r}, {c + r}] leaves less than two cells "
                f"of margin inside [{a}, {b}]", "bump")
    vals = np.ones(g.total)
    for i in range(g.n):
        vals = vals * _psi((g.points[:, i] - center[i]) / radius[i])
    return GridFunction(g, vals)


def inner(u: GridFunction, v: GridFunction) -> complex:
    """Rectangle-rule L2 inner product, linear in u and antilinear in v."""
    if u.grid != v.grid:
        raise GridMismatch("inner product of functions on different grids")
    return complex(np.sum(u.values * np.conj(v.values)) * u.grid.cell_volume)


def norm(u: GridFunction) -> float:
    return math.sqrt(max(inner(u, u).real, 0.0))


class LinearOperator:
    """A sparse matrix acting on grid functions of one grid."""

    def __init__(self, grid: Grid, matrix, name: str = ""):
        self.grid = grid
        self.matrix = sp.csr_matrix(matrix, dtype=complex)
        self.name = name
        if self.matrix.shape != (grid.total, grid.total):
            raise GridMismatch(f"matrix shape {self.matrix.shape} vs grid total {grid.total}")

    def apply(self, u: GridFunction) -> GridFunction:
        if u.grid != self.grid:
            raise GridMismatch(f"operator {self.name or '?'} applied to a function on another grid")
        return GridFunction(self.grid, self.matrix @ u.values)

    __call__ = apply

    def dense(self) -> np.ndarray:
        if self.grid.total > DENSE_LIMIT:
            raise DimensionError(
                f"dense materialisation limited to {DENSE_LIMIT} unknowns, grid has {self.grid.total}")
        return self.matrix.toarray()

    def _combine(self, other, matrix, name):
        if other.grid != self.grid:
            raise GridMismatch("operators act on different grids")
        return LinearOperator(self.grid, matrix, name)

    def __matmul__(self, other):
        if isinstance(other, GridFunction):
            return self.apply(other)
        return self._combine(other, self.matrix @ other.matrix, f"({self.name} {other.name})")

    def __add__(self, other):
        return self._combine(other, self.matrix + other.matrix, f"({self.name} + {other.name})")

    def __sub__(self, other):
        return self._combine(other, self.matrix - other.matrix, f"({self.name} - {other.name})")

    def __mul__(self, c):
        return LinearOperator(self.grid, c * self.matrix, self.name)

    __rmul__ = __mul__

    def __repr__(self):
        return f"LinearOperator({self.name!r}, total={self.grid.total})"


def _diff_1d(N, h):
    """Centered first difference with zero first/last rows and columns."""
    k = np.arange(1, N - 2)                    # interior rows with an interior right neighbour
    rows = np.concatenate([k, k + 1])
    cols = np.concatenate([k + 1, k])
    c = 1.0 / (2.0 * h)
    vals = np.concatenate([np.full(k.size, c), np.full(k.size, -c)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))


def diff_operator(g: Grid, axis: int) -> LinearOperator:
    """``(u[k+1] - u[k-1]) / 2h`` along ``axis`` (1-based).

    Values on the outermost lattice layer are treated as zero, which makes
    the matrix exactly antisymmetric; admitted test functions vanish there.
    """
    if not 1 <= axis <= g.n:
        raise ConfigError(f"axis {axis} outside 1..{g.n}", "axis")
    i = axis - 1
    before = math.prod(g.counts[:i])
    after = math.prod(g.counts[i + 1:])
    d = _diff_1d(g.counts[i], g.spacing[i])
    mat = sp.kron(sp.identity(before), sp.kron(d, sp.identity(after)))
    return LinearOperator(g, mat, f"D{axis}")
