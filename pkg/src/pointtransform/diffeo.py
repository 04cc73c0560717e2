"""Point transformations X = f(x) of R^n and their Jacobian data.

A :class:`DiffeoMap` holds the forward components (and optionally a
closed-form inverse) as expression trees.  All derivative quantities are
symbolic; numerical work is limited to evaluating them and to dense linear
algebra on the resulting n x n matrices.

The divergence term ``b_alpha = sum_beta d/dx_beta (dx_beta/dX_alpha)`` is
available through two independent routes:

* :func:`divergence_direct` differentiates the inverse Jacobian through
  ``d(A^-1) = -A^-1 (dA) A^-1`` with symbolic second derivatives of f;
* :func:`divergence_via_lemma` uses ``-J^-1 sum_beta (A^-1)_{beta alpha} dJ/dx_beta``
  with the determinant differentiated as an expression.

Their agreement is the identity ``(dJ/dX_alpha) / J = -b_alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (ArityError, ConfigError, ConvergenceError, DimensionError,
                     DomainError, SingularJacobian)
from .exprdsl import Expr, derive, evaluate_many, max_var, parse, simplify

__all__ = [
    "DiffeoMap", "JacobianData", "ValidationReport", "Violation",
    "make_map", "map_from_strings", "jacobian_at", "jacobian_field",
    "divergence_direct", "divergence_via_lemma", "divergence_field",
    "divergence_lemma_field", "forward_many", "invert_point", "invert_points",
    "validate_global", "MAX_EXPANDED_DIM",
]

MAX_EXPANDED_DIM = 4
DEFAULT_J_MIN = 1e-8
NEWTON_MAX_ITER = 100
_MAX_HALVINGS = 60


def _cofactor_det(m):
    """Laplace expansion of a square matrix of expressions."""
    n = len(m)
    if n == 1:
        return m[0][0]
    total = None
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in m[1:]]
        term = m[0][j] * _cofactor_det(minor)
        if total is None:
            total = term
        elif j % 2:
            total = total - term
        else:
            total = total + term
    return total


@dataclass(frozen=True)
class DiffeoMap:
    """Forward map ``X_alpha = f_alpha(x)`` on R^n, optionally with its inverse.

    First and second symbolic derivatives of the forward components are
    computed once, at construction.
    """

    n: int
    forward: tuple
    inverse: tuple | None = None
    j_min: float = DEFAULT_J_MIN
    jacobian_exprs: tuple = field(init=False, repr=False, compare=False)
    hessian_exprs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ArityError(f"dimension must be positive, got {self.n}")
        if len(self.forward) != self.n:
            raise ArityError(f"{len(self.forward)} forward components for n = {self.n}")
        if self.inverse is not None and len(self.inverse) != self.n:
            raise ArityError(f"{len(self.inverse)} inverse components for n = {self.n}")
        for comp in tuple(self.forward) + tuple(self.inverse or ()):
            if max_var(comp) > self.n:
                raise ArityError(f"component {comp} uses x{max_var(comp)} with n = {self.n}")
        if not self.j_min > 0:
            raise ConfigError(f"j_min must be positive, got {self.j_min}", "j_min")
        n = self.n
        # jacobian_exprs[a][b] = dX_a/dx_b ; hessian_exprs[a][b][c] = d2 X_a / dx_b dx_c
        jac = tuple(tuple(derive(f, b + 1) for b in range(n)) for f in self.forward)
        hess = tuple(
            tuple(tuple(derive(jac[a][b], c + 1) for c in range(n)) for b in range(n))
            for a in range(n))
        object.__setattr__(self, "jacobian_exprs", jac)
        object.__setattr__(self, "hessian_exprs", hess)

    @cached_property
    def det_expr(self) -> Expr:
        if self.n > MAX_EXPANDED_DIM:
            raise DimensionError(
                f"expanded determinant implemented for n <= {MAX_EXPANDED_DIM}, got {self.n}")
        rows = [list(r) for r in self.jacobian_exprs]
        return simplify(_cofactor_det(rows))

    @cached_property
    def det_gradient_exprs(self) -> tuple:
        return tuple(derive(self.det_expr, b + 1) for b in range(self.n))

    @cached_property
    def inverse_jacobian_exprs(self) -> tuple:
        """``[beta][alpha] -> dx_beta/dX_alpha`` as expressions of x (adjugate / det)."""
        n = self.n
        det = self.det_expr
        if n == 1:
            return ((simplify(1.0 / det),),)
        rows = [list(r) for r in self.jacobian_exprs]
        out = []
        for beta in range(n):
            row = []
            for alpha in range(n):
                # (A^-1)[beta][alpha] = cofactor(alpha, beta) / det
                minor = [r[:beta] + r[beta + 1:] for i, r in enumerate(rows) if i != alpha]
                cof = _cofactor_det(minor)
                if (alpha + beta) % 2:
                    cof = -cof
                row.append(simplify(cof / det))
            out.append(tuple(row))
        return tuple(out)

    @cached_property
    def inverse_jacobian_gradient_exprs(self) -> tuple:
        """``[gamma][beta][alpha] -> d/dx_gamma (dx_beta/dX_alpha)``."""
        inv = self.inverse_jacobian_exprs
        n = self.n
        return tuple(
            tuple(tuple(derive(inv[b][a], g + 1) for a in range(n)) for b in range(n))
            for g in range(n))

    @cached_property
    def divergence_exprs(self) -> tuple:
        """``b_alpha`` as expressions, by differentiating the symbolic inverse."""
        inv = self.inverse_jacobian_exprs
        out = []
        for alpha in range(self.n):
            total = None
            for beta in range(self.n):
                term = derive(inv[beta][alpha], beta + 1)
                total = term if total is None else total + term
            out.append(simplify(total))
        return tuple(out)


def make_map(forward: Sequence[Expr], inverse: Sequence[Expr] | None = None,
             j_min: float = DEFAULT_J_MIN, n: int | None = None) -> DiffeoMap:
    if n is None:
        n = len(forward)
    inv = tuple(inverse) if inverse is not None else None
    return DiffeoMap(n, tuple(forward), inv, float(j_min))


def map_from_strings(forward: Sequence[str], inverse: Sequence[str] | None = None,
                     j_min: float = DEFAULT_J_MIN, n: int | None = None) -> DiffeoMap:
    if n is None:
        n = len(forward)
    fwd = [parse(s, n) for s in forward]
    inv = [parse(s, n) for s in inverse] if inverse else None
    return make_map(fwd, inv, j_min, n)


@dataclass(frozen=True)
class JacobianData:
    point: np.ndarray
    df: np.ndarray
    det_j: float
    inv_df: np.ndarray
    divergence: np.ndarray


def _coords(points, n):
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != n:
        raise ArityError(f"points have {pts.shape[-1]} coordinates, map has n = {n}")
    return [pts[..., i] for i in range(n)]


def _eval_matrix(exprs, coords, strict=True):
    rows = [np.stack([evaluate_many(e, coords, strict) for e in row], axis=-1) for row in exprs]
    return np.stack(rows, axis=-2)


def forward_many(m: DiffeoMap, points, strict: bool = True) -> np.ndarray:
    """f evaluated at an array of points of shape (..., n)."""
    coords = _coords(points, m.n)
    return np.stack([evaluate_many(f, coords, strict) for f in m.forward], axis=-1)


def _singular_from_domain(err: DomainError):
    # a vanishing denominator in dX/dx means an unbounded derivative
    if err.reason in ("division by zero", "negative power of zero"):
        return SingularJacobian(err.point, float("nan"),
                                f"Jacobian undefined: {err.reason} in {err.node}")
    return None


def _df_field(m, coords):
    try:
        return _eval_matrix(m.jacobian_exprs, coords)
    except DomainError as err:
        sing = _singular_from_domain(err)
        if sing is None:
            raise
        raise sing from err


def jacobian_field(m: DiffeoMap, points):
    """``(df, det_j, inv_df)`` at every point of an array of shape (..., n).

    Raises :class:`SingularJacobian` for the first point with ``det_j <= j_min``.
    """
    pts = np.asarray(points, dtype=float)
    coords = _coords(pts, m.n)
    df = _df_field(m, coords)
    det = np.linalg.det(df)
    bad = ~(det > m.j_min)
    if np.any(bad):
        k = int(np.argmax(bad.ravel()))
        flat = pts.reshape(-1, m.n)
        raise SingularJacobian(_pt(flat[k]), float(det.ravel()[k]))
    eye = np.broadcast_to(np.eye(m.n), df.shape)
    inv = np.linalg.solve(df, eye)
    return df, det, inv


def _hessian_field(m, coords):
    # H[..., b, g, d] = d^2 X_g / dx_b dx_d
    n = m.n
    try:
        vals = [[[evaluate_many(m.hessian_exprs[g][b][d], coords)
                  for d in range(n)] for g in range(n)] for b in range(n)]
    except DomainError as err:
        sing = _singular_from_domain(err)
        if sing is None:
            raise
        raise sing from err
    return np.moveaxis(np.asarray(vals), (0, 1, 2), (-3, -2, -1))


def divergence_field(m: DiffeoMap, points, inv=None) -> np.ndarray:
    """``b[..., alpha]`` via the derivative-of-inverse identity."""
    pts = np.asarray(points, dtype=float)
    coords = _coords(pts, m.n)
    if inv is None:
        _, _, inv = jacobian_field(m, pts)
    hess = _hessian_field(m, coords)
    # b_a = -sum_{b,g,d} inv[b,g] H_b[g,d] inv[d,a]
    return -np.einsum("...bg,...bgd,...da->...a", inv, hess, inv)


def divergence_lemma_field(m: DiffeoMap, points) -> np.ndarray:
    """``b[..., alpha]`` as ``-J^-1 dJ/dX_alpha`` from the expanded determinant."""
    if m.n > MAX_EXPANDED_DIM:
        raise DimensionError(
            f"determinant expansion implemented for n <= {MAX_EXPANDED_DIM}, got {m.n}")
    pts = np.asarray(points, dtype=float)
    coords = _coords(pts, m.n)
    _, det, inv = jacobian_field(m, pts)
    grad = np.stack([evaluate_many(e, coords) for e in m.det_gradient_exprs], axis=-1)
    return -np.einsum("...ba,...b->...a", inv, grad) / det[..., None]


def jacobian_at(m: DiffeoMap, x) -> JacobianData:
    x = np.asarray(x, dtype=float).reshape(m.n)
    df, det, inv = jacobian_field(m, x[None, :])
    div = divergence_field(m, x[None, :], inv)
    return JacobianData(point=x, df=df[0], det_j=float(det[0]), inv_df=inv[0],
                        divergence=div[0])


def divergence_direct(m: DiffeoMap, x, alpha: int) -> float:
    """``sum_beta d/dx_beta (dx_beta/dX_alpha)`` at x; ``alpha`` is 1-based."""
    x = np.asarray(x, dtype=float).reshape(1, m.n)
    return float(divergence_field(m, x)[0, alpha - 1])


def divergence_via_lemma(m: DiffeoMap, x, alpha: int) -> float:
    x = np.asarray(x, dtype=float).reshape(1, m.n)
    return float(divergence_lemma_field(m, x)[0, alpha - 1])


def _max_abs(a):
    return np.max(np.abs(a), axis=-1)


def invert_points(m: DiffeoMap, targets, seeds=None) -> np.ndarray:
    """Solve ``f(x) = X`` for every row of ``targets`` (shape (k, n)).

    Uses the closed-form inverse when the map carries one; otherwise a
    damped Newton iteration run on all rows at once, where each row's step
    is halved until its max-norm residual decreases.
    """
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    if m.inverse is not None:
        coords = _coords(X, m.n)
        return np.stack([evaluate_many(g, coords) for g in m.inverse], axis=-1)

    x = np.zeros_like(X) if seeds is None else np.array(np.broadcast_to(seeds, X.shape), float)
    tol = 1e-12 * (1.0 + _max_abs(X))
    F = forward_many(m, x) - X
    r = _max_abs(F)
    for it in range(NEWTON_MAX_ITER + 1):
        active = ~(r <= tol)
        if not np.any(active):
            return x
        if it == NEWTON_MAX_ITER:
            break
        xa, Fa, ra = x[active], F[active], r[active]
        df, _, _ = jacobian_field(m, xa)
        step = np.linalg.solve(df, -Fa[..., None])[..., 0]
        lam = np.ones(len(xa))
        pending = np.ones(len(xa), dtype=bool)
        for _ in range(_MAX_HALVINGS):
            trial = xa[pending] + lam[pending, None] * step[pending]
            Ft = forward_many(m, trial, strict=False) - X[active][pending]
            rt = _max_abs(Ft)
            ok = np.isfinite(rt) & (rt < ra[pending])
            idx = np.flatnonzero(pending)
            acc = idx[ok]
            xa[acc] = trial[ok]
            Fa[acc] = Ft[ok]
            ra[acc] = rt[ok]
            pending[acc] = False
            if not np.any(pending):
                break
            lam[pending] *= 0.5
        x[active], F[active], r[active] = xa, Fa, ra
    worst = float(np.max(np.where(np.isfinite(r), r, np.inf)))
    raise ConvergenceError(NEWTON_MAX_ITER, worst)


def invert_point(m: DiffeoMap, X, seed=None) -> np.ndarray:
    X = np.asarray(X, dtype=float).reshape(1, m.n)
    s = None if seed is None else np.asarray(seed, dtype=float).reshape(1, m.n)
    return invert_points(m, X, s)[0]


def _pt(row):
    return tuple(float(v) for v in row)


@dataclass(frozen=True)
class Violation:
    kind: str            # "singular_jacobian" | "nonfinite" | "roundtrip"
    point: tuple
    detail: str


@dataclass
class ValidationReport:
    """Outcome of lattice sampling.  A pass is evidence, not a proof."""

    passed: bool
    n_samples: int
    box: tuple
    violations: list
    note: str = ("lattice sampling only: a pass is evidence of a global "
                 "diffeomorphism on the box, not a proof")

    def counts(self):
        out = {}
        for v in self.violations:
            out[v.kind] = out.get(v.kind, 0) + 1
        return out

    def first(self, kind):
        for v in self.violations:
            if v.kind == kind:
                return v
        return None


def validate_global(m: DiffeoMap, box, samples_per_axis: int) -> ValidationReport:
    """Sample a lattice in ``box`` and collect every violation of
    J > j_min, finiteness of f, and (when an inverse is present) g(f(x)) = x.
    """
    box = [tuple(map(float, b)) for b in box]
    if len(box) == 1 and m.n > 1:
        box = box * m.n
    if len(box) != m.n:
        raise ConfigError(f"box has {len(box)} axes, map has n = {m.n}", "box")
    axes = [np.linspace(a, b, samples_per_axis) for a, b in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([c.ravel() for c in mesh], axis=-1)
    coords = [pts[:, i] for i in range(m.n)]
    violations = []

    fx = np.stack([evaluate_many(f, coords, strict=False) for f in m.forward], axis=-1)
    finite = np.all(np.isfinite(fx), axis=-1)
    for k in np.flatnonzero(~finite):
        violations.append(Violation("nonfinite", _pt(pts[k]), "f(x) undefined or not finite"))

    df = _eval_matrix(m.jacobian_exprs, coords, strict=False)
    df_ok = np.all(np.isfinite(df), axis=(-2, -1))
    det = np.full(len(pts), np.nan)
    det[df_ok] = np.linalg.det(df[df_ok])
    for k in np.flatnonzero(~df_ok):
        violations.append(Violation("singular_jacobian", _pt(pts[k]),
                                    "Jacobian undefined or unbounded"))
    for k in np.flatnonzero(df_ok & ~(det > m.j_min)):
        violations.append(Violation("singular_jacobian", _pt(pts[k]),
                                    f"det J = {det[k]:.3e} <= j_min = {m.j_min:g}"))

    if m.inverse is not None and np.any(finite):
        fcoords = [fx[finite, i] for i in range(m.n)]
        back = np.stack([evaluate_many(g, fcoords, strict=False) for g in m.inverse], axis=-1)
        err = _max_abs(back - pts[finite])
        bad = ~(err <= 1e-9 * (1.0 + _max_abs(pts[finite])))
        for k, e in zip(np.flatnonzero(finite)[bad], err[bad]):
            violations.append(Violation("roundtrip", _pt(pts[k]), f"|g(f(x)) - x| = {e:.3e}"))

    return ValidationReport(passed=not violations, n_samples=len(pts),
                            box=tuple(box), violations=violations)
