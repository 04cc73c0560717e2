"""Grid realisations of the transformed canonical operators.

* ``X_alpha``: multiplication by ``f_alpha(x)``.
* ``p_beta``: ``-i`` times the centered difference along axis beta.
* ``P_alpha``: the symmetrised momentum
  ``-(i/2) sum_beta (C_beta D_beta + D_beta C_beta)`` with
  ``C_beta = diag(dx_beta/dX_alpha)``.  Because every ``D_beta`` is exactly
  antisymmetric and every ``C_beta`` is a real diagonal, the assembled
  matrix is exactly hermitian in floating point.

The unitary map ``(U u)(X) = u(x(X)) / sqrt(J(x(X)))`` moves functions of x
onto a lattice in X, where ``P_alpha`` becomes the flat momentum
``-i d/dX_alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .diffeo import (DiffeoMap, divergence_field, forward_many, invert_points,
                     jacobian_field)
from .errors import GridMismatch, SupportError
from .exprdsl import evaluate_many
from .grid import Grid, GridFunction, LinearOperator, diff_operator, make_grid

__all__ = [
    "LinearOperator", "ClassicalState", "position_op", "momentum_flat",
    "momentum_op", "momentum_op_expanded", "momentum_coefficients",
    "flat_momentum_in_X", "coordinate_op", "image_grid", "unitary_forward",
    "unitary_inverse", "classical_extended", "poisson_residuals", "commutator",
]

SUPPORT_MARGIN_CELLS = 2


def _diag(values):
    return sp.diags(np.asarray(values), format="csr")


def commutator(a: LinearOperator, b: LinearOperator) -> LinearOperator:
    return a @ b - b @ a


def position_op(m: DiffeoMap, g: Grid, alpha: int) -> LinearOperator:
    _check_dims(m, g)
    coords = [g.points[:, i] for i in range(g.n)]
    vals = evaluate_many(m.forward[alpha - 1], coords)
    return LinearOperator(g, _diag(vals.astype(complex)), f"X{alpha}")


def coordinate_op(g: Grid, alpha: int) -> LinearOperator:
    """Multiplication by the lattice coordinate along ``alpha``."""
    return LinearOperator(g, _diag(g.points[:, alpha - 1].astype(complex)), f"M{alpha}")


def momentum_flat(g: Grid, beta: int) -> LinearOperator:
    d = diff_operator(g, beta)
    return LinearOperator(g, -1j * d.matrix, f"p{beta}")


def flat_momentum_in_X(gX: Grid, alpha: int) -> LinearOperator:
    """``-i d/dX_alpha`` on the image lattice."""
    op = momentum_flat(gX, alpha)
    op.name = f"-i d/dX{alpha}"
    return op


def _check_dims(m, g):
    if m.n != g.n:
        raise GridMismatch(f"map has n = {m.n}, grid has {g.n} axes")


def momentum_coefficients(m: DiffeoMap, g: Grid):
    """``(inv_df, b)`` on every lattice point.

    ``inv_df[k, beta, alpha] = dx_beta/dX_alpha`` and ``b[k, alpha]`` the
    divergence term.  Raises SingularJacobian if J <= j_min anywhere.
    """
    _check_dims(m, g)
    _, _, inv = jacobian_field(m, g.points)
    b = divergence_field(m, g.points, inv)
    return inv, b


def momentum_op(m: DiffeoMap, g: Grid, alpha: int, inv=None) -> LinearOperator:
    """Symmetrised momentum conjugate to ``X_alpha`` (exactly hermitian)."""
    _check_dims(m, g)
    if inv is None:
        _, _, inv = jacobian_field(m, g.points)
    total = None
    for beta in range(1, g.n + 1):
        c = _diag(inv[:, beta - 1, alpha - 1])
        d = diff_operator(g, beta).matrix.real
        s = c @ d + d @ c
        total = s if total is None else total + s
    return LinearOperator(g, -0.5j * total, f"P{alpha}")


def momentum_op_expanded(m: DiffeoMap, g: Grid, alpha: int, coeffs=None) -> LinearOperator:
    """``-i sum_beta C_beta D_beta - (i/2) diag(b_alpha)``.

    Same continuum operator as :func:`momentum_op`; the two discretisations
    differ by O(h^2) on smooth compactly supported functions.
    """
    _check_dims(m, g)
    inv, b = coeffs if coeffs is not None else momentum_coefficients(m, g)
    total = None
    for beta in range(1, g.n + 1):
        term = _diag(inv[:, beta - 1, alpha - 1]) @ diff_operator(g, beta).matrix.real
        total = term if total is None else total + term
    mat = -1j * total - 0.5j * _diag(b[:, alpha - 1])
    return LinearOperator(g, mat, f"P{alpha}'")


# ---------------------------------------------------------------------------
# unitary map

def image_grid(m: DiffeoMap, gx: Grid, counts) -> Grid:
    """X-lattice spanning f(gx) per axis, pulled in by two X-cells on each side."""
    fx = forward_many(m, gx.points, strict=False)
    if isinstance(counts, int):
        counts = (counts,) * m.n
    bounds = []
    for i, N in enumerate(counts):
        col = fx[:, i][np.isfinite(fx[:, i])]
        lo, hi = float(col.min()), float(col.max())
        h = (hi - lo) / (N + 2 * SUPPORT_MARGIN_CELLS - 1)
        bounds.append((lo + SUPPORT_MARGIN_CELLS * h, hi - SUPPORT_MARGIN_CELLS * h))
    return make_grid(bounds, counts)


def _inside(points, g, margin_cells):
    ok = np.ones(len(points), dtype=bool)
    for i, ((a, b), h) in enumerate(zip(g.bounds, g.spacing)):
        ok &= (points[:, i] >= a + margin_cells * h) & (points[:, i] <= b - margin_cells * h)
    return ok


def _interpolator(g: Grid, u: GridFunction, method: str):
    if method not in ("linear", "cubic"):
        raise ValueError(f"unknown interpolation method {method!r}")
    return RegularGridInterpolator(g.axes, u.reshaped(), method=method,
                                   bounds_error=False, fill_value=0.0)


def unitary_forward(m: DiffeoMap, gx: Grid, gX: Grid, u: GridFunction,
                    method: str = "linear") -> GridFunction:
    """``(U u)(X) = u(x(X)) / sqrt(J(x(X)))`` sampled on ``gX``.

    ``u`` is interpolated at the off-lattice preimages ``x(X)``; ``method``
    is ``"linear"`` (multilinear, the default) or ``"cubic"``.  Lattice
    points whose preimage leaves ``gx`` get the value 0, which is only
    admissible because the support of ``u`` must map at least two X-cells
    inside ``gX`` (otherwise SupportError).
    """
    _check_dims(m, gx)
    _check_dims(m, gX)
    if u.grid != gx:
        raise GridMismatch("u must live on the x-grid")
    support = gx.points[np.abs(u.values) > 0]
    if len(support):
        img = forward_many(m, support)
        if not np.all(_inside(img, gX, SUPPORT_MARGIN_CELLS)):
            raise SupportError("support of u maps within two cells of the X-grid boundary")
    xs = invert_points(m, gX.points)
    inside = _inside(xs, gx, 0)
    vals = np.zeros(gX.total, dtype=complex)
    if np.any(inside):
        _, det, _ = jacobian_field(m, xs[inside])
        vals[inside] = _interpolator(gx, u, method)(xs[inside]) / np.sqrt(det)
    return GridFunction(gX, vals)


def unitary_inverse(m: DiffeoMap, gx: Grid, gX: Grid, t: GridFunction,
                    method: str = "linear") -> GridFunction:
    """``(U* t)(x) = sqrt(J(x)) t(f(x))`` sampled on ``gx``."""
    _check_dims(m, gx)
    _check_dims(m, gX)
    if t.grid != gX:
        raise GridMismatch("t must live on the X-grid")
    support = gX.points[np.abs(t.values) > 0]
    if len(support):
        pre = invert_points(m, support)
        if not np.all(_inside(pre, gx, SUPPORT_MARGIN_CELLS)):
            raise SupportError("support of t maps within two cells of the x-grid boundary")
    fx = forward_many(m, gx.points)
    inside = _inside(fx, gX, 0)
    vals = np.zeros(gx.total, dtype=complex)
    if np.any(inside):
        _, det, _ = jacobian_field(m, gx.points[inside])
        vals[inside] = np.sqrt(det) * _interpolator(gX, t, method)(fx[inside])
    return GridFunction(gx, vals)


# ---------------------------------------------------------------------------
# classical extended point transformation

@dataclass(frozen=True)
class ClassicalState:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if x.shape != p.shape:
            raise ValueError("x and p must have equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("phase-space coordinates must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)


def classical_extended(m: DiffeoMap, s: ClassicalState) -> ClassicalState:
    """``(x, p) -> (f(x), P)`` with ``P_alpha = sum_beta (dx_beta/dX_alpha) p_beta``."""
    _, _, inv = jacobian_field(m, s.x[None, :])
    X = forward_many(m, s.x[None, :])[0]
    return ClassicalState(X, inv[0].T @ s.p)


def _inverse_jacobian_gradient(m, x, inv):
    # dinv[g, b, a] = d/dx_g (dx_b/dX_a)
    n = m.n
    if n <= 4:
        coords = [np.asarray([v]) for v in x]
        exprs = m.inverse_jacobian_gradient_exprs
        return np.array([[[evaluate_many(exprs[g][b][a], coords)[0] for a in range(n)]
                          for b in range(n)] for g in range(n)])
    from .diffeo import _hessian_field
    hess = _hessian_field(m, [np.asarray([v]) for v in x])[0]
    return -np.einsum("bk,gkl,la->gba", inv, hess, inv)


def poisson_residuals(m: DiffeoMap, x, alpha: int, beta: int, p):
    """``(|[X_a,P_b] - delta|, |[X_a,X_b]|, |[P_a,P_b]|)`` at the phase-space point (x, p)."""
    x = np.asarray(x, dtype=float).reshape(m.n)
    p = np.asarray(p, dtype=float).reshape(m.n)
    df, _, inv = jacobian_field(m, x[None, :])
    df, inv = df[0], inv[0]
    dinv = _inverse_jacobian_gradient(m, x, inv)
    a, b = alpha - 1, beta - 1
    # dX_a/dx_g = df[a, g]; dX/dp = 0; dP_a/dp_g = inv[g, a]; dP_a/dx_g = sum_d dinv[g, d, a] p_d
    dP_dx = np.einsum("gda,d->ga", dinv, p)
    xp = float(np.sum(df[a, :] * inv[:, b]))
    xx = float(np.sum(df[a, :] * 0.0 - df[b, :] * 0.0))
    pp = float(np.sum(dP_dx[:, a] * inv[:, b] - dP_dx[:, b] * inv[:, a]))
    return abs(xp - (1.0 if a == b else 0.0)), abs(xx), abs(pp)
