"""Quantified numerical checks for the transformed canonical variables.

Every check returns a :class:`CheckResult` whose ``passed`` flag is exactly
"every residual is at or below its tolerance".  Quantities that are exact by
construction (hermiticity, commuting diagonals) get machine-level
tolerances; discretisation-limited quantities are judged by their observed
convergence order across nested refinements, never by absolute size.

Selfadjointness and spectra cannot be established on a finite lattice; the
checks for them are labelled ``"witness"``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .diffeo import (DiffeoMap, divergence_field, divergence_lemma_field,
                     forward_many, jacobian_field, validate_global)
from .errors import ConfigError, PointTransformError
from .grid import BumpSpec, Grid, LinearOperator, bump, inner, make_grid, norm
from .operators import (commutator, coordinate_op, flat_momentum_in_X,
                        momentum_coefficients, momentum_op, momentum_op_expanded,
                        poisson_residuals, position_op, unitary_forward,
                        unitary_inverse)

__all__ = [
    "CheckResult", "VerificationReport", "check_validation", "check_hermiticity",
    "check_ccr", "check_expanded_form", "check_unitary_equivalence",
    "check_isometry", "check_lemma_cal", "check_kernel_growth",
    "check_spectral_coverage", "check_classical_brackets", "observed_orders",
    "run_suite", "STENCIL_ORDER", "INTERPOLATION_ORDER",
]

STENCIL_ORDER = 1.8
INTERPOLATION_ORDER = 1.0
EXACT_TOL = 1e-12
# residuals at or below this are rounding noise and carry no order information
ROUNDING_FLOOR = 1e-12


@dataclass
class CheckResult:
    name: str
    residuals: dict
    tolerances: dict
    kind: str = "check"
    context: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    runtime_ms: int = 0

    @property
    def passed(self) -> bool:
        return all(self.residuals[k] <= self.tolerances[k] for k in self.residuals)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "tolerance": {k: float(v) for k, v in self.tolerances.items()},
            "pass": self.passed,
            "metrics": _jsonable(self.metrics),
            "context": _jsonable(self.context),
            "runtime_ms": int(self.runtime_ms),
        }


@dataclass
class VerificationReport:
    checks: list
    config: dict
    started_at: str
    finished_at: str

    @property
    def overall_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "config": _jsonable(self.config),
            "checks": [c.to_dict() for c in self.checks],
            "overall_pass": self.overall_pass,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def rows(self):
        """One CSV row per residual."""
        for c in self.checks:
            for k, v in c.residuals.items():
                yield {"check": c.name, "kind": c.kind, "residual": k, "value": float(v),
                       "tolerance": float(c.tolerances[k]), "pass": c.passed}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ms = int(round(1000 * (time.perf_counter() - self.t0)))
        return False


# ---------------------------------------------------------------------------
# convergence bookkeeping

def observed_orders(values: Sequence[float], spacings: Sequence[float],
                    floor: float = ROUNDING_FLOOR) -> list:
    """``log(r_k / r_{k+1}) / log(h_k / h_{k+1})`` for consecutive levels.

    A pair whose finer residual is at rounding level counts as converged
    (order +inf); a rise out of rounding level gives -inf.
    """
    out = []
    for (r0, r1), (h0, h1) in zip(zip(values, values[1:]), zip(spacings, spacings[1:])):
        if r1 <= floor:
            out.append(math.inf)
        elif r0 <= floor:
            out.append(-math.inf)
        else:
            out.append(math.log(r0 / r1) / math.log(h0 / h1))
    return out


def _convergence(name, values, spacings, order_min, exact_tol, residuals, tolerances, metrics):
    """Record either an exactness residual or an order shortfall for one quantity."""
    metrics[f"{name}_per_level"] = list(values)
    if len(values) == 1 or max(values) <= exact_tol:
        residuals[f"{name}_max"] = max(values)
        tolerances[f"{name}_max"] = exact_tol
        return
    orders = observed_orders(values, spacings)
    metrics[f"{name}_orders"] = orders
    residuals[f"{name}_order_shortfall"] = max(0.0, order_min - min(orders))
    tolerances[f"{name}_order_shortfall"] = 0.0


def _check_nested(spacings):
    if any(not h1 < h0 for h0, h1 in zip(spacings, spacings[1:])):
        raise ConfigError("refinement levels must have strictly decreasing spacing", "levels")


def _bumps_on(g: Grid, bumps):
    return [bump(g, b) for b in bumps]


# ---------------------------------------------------------------------------
# individual checks

def check_validation(m: DiffeoMap, box, samples_per_axis: int) -> CheckResult:
    with _Timer() as t:
        rep = validate_global(m, box, samples_per_axis)
    counts = rep.counts()
    near = sorted(rep.violations, key=lambda v: float(np.linalg.norm(v.point)))[:5]
    ctx = {
        "box": [list(b) for b in rep.box],
        "samples": rep.n_samples,
        "violation_counts": counts,
        "violations_nearest_origin": [
            {"kind": v.kind, "point": list(v.point), "detail": v.detail} for v in near],
        "note": rep.note,
    }
    res = {"violations": float(len(rep.violations))}
    return CheckResult("validate_global", res, {"violations": 0.0}, "witness", ctx,
                       runtime_ms=t.ms)


def check_hermiticity(op: LinearOperator, g: Grid, bumps: Sequence[BumpSpec],
                      tol: float = EXACT_TOL, matrix_tol: float = 1e-13) -> CheckResult:
    """``max |(Au, v) - (u, Av)| / (|u| |v|)`` over bump pairs, plus the
    elementwise relative defect ``max|A - A^H| / max|A|`` of the matrix."""
    with _Timer() as t:
        fs = _bumps_on(g, bumps)
        applied = [op.apply(u) for u in fs]
        sym = 0.0
        for i, (u, au) in enumerate(zip(fs, applied)):
            for v, av in zip(fs[i:], applied[i:]):
                d = abs(inner(au, v) - inner(u, av)) / (norm(u) * norm(v))
                sym = max(sym, d)
        mat = op.matrix
        diff = (mat - mat.conj().T).tocoo()
        scale = np.max(np.abs(mat.data)) if mat.nnz else 1.0
        defect = (np.max(np.abs(diff.data)) if diff.nnz else 0.0) / scale
    res = {"symmetry": sym, "matrix_defect": float(defect)}
    tols = {"symmetry": tol, "matrix_defect": matrix_tol}
    return CheckResult(f"hermiticity[{op.name}]", res, tols, "witness",
                       {"grid": _grid_desc(g), "bumps": len(fs)}, runtime_ms=t.ms)


def _grid_desc(g: Grid):
    return {"bounds": [list(b) for b in g.bounds], "counts": list(g.counts)}


def _ccr_level(m, g, bumps):
    n = g.n
    X = [position_op(m, g, a) for a in range(1, n + 1)]
    P = [momentum_op(m, g, a) for a in range(1, n + 1)]
    # diagonal products commute bitwise, so this commutator is exactly zero
    XX = {(a, b): commutator(X[a], X[b]) for a in range(n) for b in range(a + 1, n)}
    r1 = r2 = r3 = 0.0
    for u in _bumps_on(g, bumps):
        nu = norm(u)
        for a in range(n):
            for b in range(n):
                lhs = X[a] @ (P[b] @ u) - P[b] @ (X[a] @ u)
                if a == b:
                    lhs = lhs - 1j * u
                r1 = max(r1, norm(lhs) / nu)
                if a < b:
                    r2 = max(r2, norm(XX[a, b] @ u) / nu)
                    r3 = max(r3, norm(P[a] @ (P[b] @ u) - P[b] @ (P[a] @ u)) / nu)
    return r1, r2, r3


def check_ccr(m: DiffeoMap, grids: Sequence[Grid], bumps: Sequence[BumpSpec],
              order_min: float = STENCIL_ORDER) -> CheckResult:
    """Canonical commutation relations on nested refinements.

    ``[X_a, X_b] u`` must vanish exactly; ``[X_a, P_b] u - i delta u`` and
    ``[P_a, P_b] u`` must shrink with observed order >= ``order_min``.
    """
    if len(grids) < 3:
        raise ConfigError("check_ccr needs at least three refinement levels", "levels")
    with _Timer() as t:
        hs = [max(g.spacing) for g in grids]
        _check_nested(hs)
        levels = [_ccr_level(m, g, bumps) for g in grids]
        r1, r2, r3 = (list(x) for x in zip(*levels))
        res, tols, met = {"xx_commutator_max": max(r2)}, {"xx_commutator_max": 0.0}, {}
        met["spacing"] = hs
        _convergence("xp_minus_i", r1, hs, order_min, 0.0, res, tols, met)
        if m.n > 1:
            _convergence("pp_commutator", r3, hs, order_min, 0.0, res, tols, met)
    return CheckResult("ccr", res, tols, "check",
                       {"grids": [_grid_desc(g) for g in grids]}, met, t.ms)


def check_expanded_form(m: DiffeoMap, grids: Sequence[Grid], bumps: Sequence[BumpSpec],
                        order_min: float = STENCIL_ORDER) -> CheckResult:
    """Symmetrised vs expanded momentum: ``|(P - P')u| / |u|`` is O(h^2)."""
    if len(grids) < 3:
        raise ConfigError("check_expanded_form needs at least three refinement levels", "levels")
    with _Timer() as t:
        hs = [max(g.spacing) for g in grids]
        _check_nested(hs)
        vals = []
        for g in grids:
            coeffs = momentum_coefficients(m, g)
            worst = 0.0
            for a in range(1, m.n + 1):
                P = momentum_op(m, g, a, inv=coeffs[0])
                Pe = momentum_op_expanded(m, g, a, coeffs)
                for u in _bumps_on(g, bumps):
                    worst = max(worst, norm(P @ u - Pe @ u) / norm(u))
            vals.append(worst)
        res, tols, met = {}, {}, {"spacing": hs}
        _convergence("sym_minus_expanded", vals, hs, order_min, 0.0, res, tols, met)
    return CheckResult("expanded_form", res, tols, "check",
                       {"grids": [_grid_desc(g) for g in grids]}, met, t.ms)


def _unitary_levels(levels):
    if not levels:
        raise ConfigError("no unitary-map grid levels configured", "unitary")
    hs = [max(max(gx.spacing), max(gX.spacing)) for gx, gX in levels]
    if len(levels) > 1:
        _check_nested(hs)
    return hs


def check_unitary_equivalence(m: DiffeoMap, levels, bumps: Sequence[BumpSpec],
                              order_min: float = INTERPOLATION_ORDER,
                              exact_tol: float = EXACT_TOL,
                              method: str = "linear") -> CheckResult:
    """``P_a = U* (-i d/dX_a) U`` and ``X_a = U* M_{X_a} U`` applied to bumps.

    ``levels`` is a sequence of (x-grid, X-grid) pairs refined together.
    """
    with _Timer() as t:
        hs = _unitary_levels(levels)
        e1s, e2s = [], []
        for gx, gX in levels:
            e1 = e2 = 0.0
            for u in _bumps_on(gx, bumps):
                nu = norm(u)
                tu = unitary_forward(m, gx, gX, u, method)
                for a in range(1, m.n + 1):
                    lhs = momentum_op(m, gx, a) @ u
                    rhs = unitary_inverse(m, gx, gX, flat_momentum_in_X(gX, a) @ tu, method)
                    e1 = max(e1, norm(lhs - rhs) / nu)
                    lhs = position_op(m, gx, a) @ u
                    rhs = unitary_inverse(m, gx, gX, coordinate_op(gX, a) @ tu, method)
                    e2 = max(e2, norm(lhs - rhs) / nu)
            e1s.append(e1)
            e2s.append(e2)
        res, tols, met = {}, {}, {"spacing": hs}
        _convergence("momentum_equivalence", e1s, hs, order_min, exact_tol, res, tols, met)
        _convergence("position_equivalence", e2s, hs, order_min, exact_tol, res, tols, met)
    ctx = {"levels": [{"x": _grid_desc(gx), "X": _grid_desc(gX)} for gx, gX in levels],
           "interpolation": method}
    return CheckResult("unitary_equivalence", res, tols, "check", ctx, met, t.ms)


def check_isometry(m: DiffeoMap, levels, bumps: Sequence[BumpSpec],
                   order_min: float = INTERPOLATION_ORDER, exact_tol: float = EXACT_TOL,
                   finest_tol: float | None = None, method: str = "linear") -> CheckResult:
    """Norm preservation ``| |Uu|^2 - |u|^2 | / |u|^2`` and the round trip
    ``|U*Uu - u| / |u|`` across refinement levels."""
    with _Timer() as t:
        hs = _unitary_levels(levels)
        isos, trips = [], []
        for gx, gX in levels:
            iso = trip = 0.0
            for u in _bumps_on(gx, bumps):
                nu2 = inner(u, u).real
                tu = unitary_forward(m, gx, gX, u, method)
                iso = max(iso, abs(inner(tu, tu).real - nu2) / nu2)
                back = unitary_inverse(m, gx, gX, tu, method)
                trip = max(trip, norm(back - u) / math.sqrt(nu2))
            isos.append(iso)
            trips.append(trip)
        res, tols, met = {}, {}, {"spacing": hs}
        _convergence("isometry", isos, hs, order_min, exact_tol, res, tols, met)
        _convergence("roundtrip", trips, hs, order_min, exact_tol, res, tols, met)
        if finest_tol is not None:
            res["isometry_finest"] = isos[-1]
            tols["isometry_finest"] = finest_tol
    ctx = {"levels": [{"x": _grid_desc(gx), "X": _grid_desc(gX)} for gx, gX in levels],
           "interpolation": method}
    return CheckResult("isometry", res, tols, "check", ctx, met, t.ms)


def _sample_box(box, n, n_points, rng):
    box = [tuple(map(float, b)) for b in box]
    if len(box) == 1 and n > 1:
        box = box * n
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    return lo + (hi - lo) * rng.random((n_points, n))


def check_lemma_cal(m: DiffeoMap, box, n_points: int, seed: int = 42,
                    tol: float = 1e-9) -> CheckResult:
    """Jacobian derivative identity: the two divergence routes agree."""
    with _Timer() as t:
        rng = np.random.default_rng(seed)
        pts = _sample_box(box, m.n, n_points, rng)
        direct = divergence_field(m, pts)
        lemma = divergence_lemma_field(m, pts)
        rel = np.abs(direct - lemma) / (1.0 + np.abs(direct))
        worst = float(rel.max())
    return CheckResult("lemma_jacobian_derivative", {"relative_gap": worst},
                       {"relative_gap": tol}, "check",
                       {"box": [list(b) for b in box], "n_points": n_points, "seed": seed},
                       {"max_abs_divergence": float(np.abs(direct).max())}, t.ms)


def check_classical_brackets(m: DiffeoMap, box, n_points: int, seed: int = 42,
                             tol: float = 1e-10) -> CheckResult:
    with _Timer() as t:
        rng = np.random.default_rng(seed)
        xs = _sample_box(box, m.n, n_points, rng)
        ps = rng.uniform(-1.0, 1.0, (n_points, m.n))
        worst = [0.0, 0.0, 0.0]
        for x, p in zip(xs, ps):
            for a in range(1, m.n + 1):
                for b in range(1, m.n + 1):
                    r = poisson_residuals(m, x, a, b, p)
                    worst = [max(w, v) for w, v in zip(worst, r)]
    names = ("xp_minus_delta", "xx", "pp")
    return CheckResult("classical_brackets", dict(zip(names, worst)),
                       {k: tol for k in names}, "check",
                       {"box": [list(b) for b in box], "n_points": n_points, "seed": seed},
                       runtime_ms=t.ms)


def _log_integral(m: DiffeoMap, alpha, L, sign, step):
    """``log of int_{[-L,L]^n} J(x) exp(2 sign X_alpha(x)) dx`` (trapezoid, log-space)."""
    N = int(math.ceil(2 * L / step)) + 1
    g = make_grid([(-L, L)] * m.n, N)
    _, det, _ = jacobian_field(m, g.points)
    X = forward_many(m, g.points)[:, alpha - 1]
    logw = np.zeros(g.total)
    for i, h in enumerate(g.spacing):
        idx = np.unravel_index(np.arange(g.total), g.shape)[i]
        edge = (idx == 0) | (idx == g.counts[i] - 1)
        logw += math.log(h) + np.where(edge, math.log(0.5), 0.0)
    return float(logsumexp(logw + np.log(det) + 2.0 * sign * X))


def check_kernel_growth(m: DiffeoMap, alpha: int, L_values: Sequence[float], sign: int,
                        growth_min: float = 5.0, step: float = 0.01) -> CheckResult:
    """The candidates ``sqrt(J) exp(+-X_alpha)`` are not square integrable.

    Their squared norm over ``[-L, L]^n`` must grow by at least
    ``growth_min`` between consecutive L values.
    """
    if len(L_values) < 3 or any(not b > a for a, b in zip(L_values, L_values[1:])):
        raise ConfigError("L_values must be increasing with at least three entries", "l_values")
    if sign not in (1, -1):
        raise ConfigError("sign must be +1 or -1", "sign")
    with _Timer() as t:
        logs = [_log_integral(m, alpha, L, sign, step) for L in L_values]
        log_ratios = [b - a for a, b in zip(logs, logs[1:])]
        shortfall = max(0.0, math.log(growth_min) - min(log_ratios))
        nonincreasing = float(sum(1 for r in log_ratios if not r > 0))
    s = "+" if sign > 0 else "-"
    res = {"growth_shortfall_log": shortfall, "non_increasing_steps": nonincreasing}
    tols = {"growth_shortfall_log": 0.0, "non_increasing_steps": 0.0}
    met = {"L_values": list(L_values), "log_integrals": logs, "log_ratios": log_ratios}
    return CheckResult(f"kernel_growth[alpha={alpha},sign={s}]", res, tols, "witness",
                       {"growth_min": growth_min, "step": step}, met, t.ms)


def _window_gap(eigs, lo, hi):
    inside = np.sort(eigs[(eigs >= lo) & (eigs <= hi)])
    return float(np.max(np.diff(np.concatenate([[lo], inside, [hi]]))))


def check_spectral_coverage(m: DiffeoMap, alpha: int, grid_levels, window) -> CheckResult:
    """Largest eigenvalue gap inside ``window`` must strictly shrink for both
    ``X_alpha`` and ``P_alpha`` as the truncation grows."""
    lo, hi = map(float, window)
    with _Timer() as t:
        grids = [g if isinstance(g, Grid) else make_grid(*g) for g in grid_levels]
        if len(grids) < 2:
            raise ConfigError("spectral coverage needs at least two grid levels", "spectral")
        p_gaps, x_gaps = [], []
        for g in grids:
            P = momentum_op(m, g, alpha).dense()
            X = position_op(m, g, alpha).matrix.diagonal().real
            p_gaps.append(_window_gap(np.linalg.eigvalsh(P), lo, hi))
            x_gaps.append(_window_gap(np.sort(X), lo, hi))
    bad_p = float(sum(1 for a, b in zip(p_gaps, p_gaps[1:]) if not b < a))
    bad_x = float(sum(1 for a, b in zip(x_gaps, x_gaps[1:]) if not b < a))
    res = {"momentum_gap_nondecreasing": bad_p, "position_gap_nondecreasing": bad_x}
    tols = {k: 0.0 for k in res}
    met = {"momentum_gaps": p_gaps, "position_gaps": x_gaps}
    ctx = {"window": [lo, hi], "grids": [_grid_desc(g) for g in grids]}
    return CheckResult(f"spectral_coverage[alpha={alpha}]", res, tols, "witness", ctx, met, t.ms)


# ---------------------------------------------------------------------------
# suite

def _error_result(name, err):
    return CheckResult(name, {"error": 1.0}, {"error": 0.0}, "check",
                       {"error": f"{type(err).__name__}: {err}"})


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_suite(cfg) -> VerificationReport:
    """Run the checks selected in ``cfg`` (a :class:`~pointtransform.config.SuiteConfig`)
    in declaration order.

    A failing check never stops the suite.  If the map fails lattice
    validation, operator-level checks are skipped and the assembly error is
    recorded instead.
    """
    if not cfg.checks:
        raise ConfigError("no checks selected", "checks.run")
    started = _now()
    m = cfg.build_map()
    results = []
    validated = True
    for name in cfg.checks:
        if not validated and name != "validate":
            continue
        try:
            produced = _run_one(name, m, cfg)
        except PointTransformError as err:
            if isinstance(err, ConfigError):
                raise
            produced = [_error_result(name, err)]
        results.extend(produced)
        if name == "validate" and not all(r.passed for r in produced):
            validated = False
            results.append(_assembly_attempt(m, cfg))
    return VerificationReport(results, cfg.echo(), started, _now())


def _assembly_attempt(m, cfg):
    g = cfg.grid_levels()[0]
    try:
        momentum_op(m, g, 1)
    except PointTransformError as err:
        r = _error_result("operator_assembly", err)
        r.context["skipped"] = "operator checks skipped: map failed validation"
        return r
    return CheckResult("operator_assembly", {"skipped_checks": 1.0}, {"skipped_checks": 0.0},
                       "check", {"skipped": "operator checks skipped: map failed validation"})


def _run_one(name, m, cfg):
    alphas = range(1, m.n + 1)
    if name == "validate":
        return [check_validation(m, cfg.validate_box, cfg.validate_samples)]
    if name == "lemma":
        return [check_lemma_cal(m, cfg.sample_box, cfg.lemma_points, cfg.seed)]
    if name == "brackets":
        return [check_classical_brackets(m, cfg.sample_box, cfg.bracket_points, cfg.seed)]
    if name == "hermiticity":
        g = cfg.grid_levels()[-1]
        out = [check_hermiticity(momentum_op(m, g, a), g, cfg.bumps) for a in alphas]
        out += [check_hermiticity(position_op(m, g, a), g, cfg.bumps) for a in alphas]
        return out
    if name == "expanded":
        return [check_expanded_form(m, cfg.grid_levels(), cfg.bumps)]
    if name == "ccr":
        return [check_ccr(m, cfg.grid_levels(), cfg.bumps)]
    if name == "isometry":
        return [check_isometry(m, cfg.unitary_levels(m), cfg.unitary_bumps,
                               finest_tol=cfg.isometry_tol, method=cfg.interpolation)]
    if name == "unitary":
        return [check_unitary_equivalence(m, cfg.unitary_levels(m), cfg.unitary_bumps,
                                          method=cfg.interpolation)]
    if name == "kernel":
        return [check_kernel_growth(m, a, cfg.l_values, s, cfg.growth_min, cfg.kernel_step)
                for a in alphas for s in (1, -1)]
    if name == "spectral":
        return [check_spectral_coverage(m, a, cfg.spectral_levels, cfg.window) for a in alphas]
    raise ConfigError(f"unknown check {name!r}", "checks.run")
