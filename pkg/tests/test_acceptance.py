"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the per-criterion lines
appear in the "acceptance criteria" summary section (and on stdout with -s).
"""

import json
import math
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from pointtransform.cli import main, sinh_coefficient_table
from pointtransform.demos import demo_config
from pointtransform.diffeo import map_from_strings
from pointtransform.grid import BumpSpec, make_grid
from pointtransform.operators import momentum_op
from pointtransform.verify import (check_ccr, check_classical_brackets, check_hermiticity,
                                   check_isometry, check_kernel_growth, check_lemma_cal,
                                   check_spectral_coverage, check_unitary_equivalence)

REPO = Path(__file__).resolve().parents[1]
SINH = demo_config("sinh")
SHEAR = demo_config("shear2d")
POLAR = demo_config("polar-fail")
IDENTITY = map_from_strings(["x1"], ["x1"])
DOUBLE = map_from_strings(["2*x1"], ["0.5*x1"])
AFFINE3 = map_from_strings(["2*x1 + x2 - 1", "x2 + 0.5*x3", "x3 - x1 + 4"])
# the polar map is only a local diffeomorphism; this box avoids the origin and the cut
POLAR_LOCAL_BOX = [(0.2, 1.0), (-1.0, 1.0)]


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_jacobian_derivative_identity():
    maps = {"sinh n=1": SINH.build_map(), "shear n=2": SHEAR.build_map(),
            "sinh-shear n=2": map_from_strings(["sinh(x1)", "x2 + x1"]), "affine n=3": AFFINE3}
    gaps = {k: check_lemma_cal(m, [(-3, 3)], 200, seed=42).residuals["relative_gap"]
            for k, m in maps.items()}
    worst = max(gaps.values())
    report(1, "two divergence routes agree at 200 seeded points", worst <= 1e-9,
           f"max relative gap {worst:.2e} <= 1e-9")


def test_criterion_02_sinh_golden_coefficients():
    _, _, gap = sinh_coefficient_table((-10.0, 10.0), 401)
    report(2, "sinh momentum coefficients equal the closed form", gap <= 1e-12,
           f"max grid discrepancy {gap:.2e} <= 1e-12 on [-10,10], N=401")


def _dense_defect(op):
    M = op.dense()
    return float(np.max(np.abs(M - M.conj().T)) / np.max(np.abs(M)))


def test_criterion_03_structural_hermiticity():
    cases = [
        (SINH.build_map(), make_grid([(-10, 10)], 401),
         [BumpSpec((0.5,), (3.0,)), BumpSpec((-1.0,), (2.5,)), BumpSpec((1.5,), (2.0,))]),
        (SHEAR.build_map(), make_grid([(-5, 5)] * 2, 65), [BumpSpec((0.3, -0.2), (3.0,))]),
        (POLAR.build_map(), make_grid(POLAR_LOCAL_BOX, [33, 65]),
         [BumpSpec((0.6, 0.0), (0.3, 0.6))]),
    ]
    defect = sym = 0.0
    for m, g, bumps in cases:
        for a in range(1, m.n + 1):
            op = momentum_op(m, g, a)
            defect = max(defect, _dense_defect(op))
            sym = max(sym, check_hermiticity(op, g, bumps).residuals["symmetry"])
    ok = defect <= 1e-13 and sym <= 1e-12
    report(3, "momentum matrices are hermitian", ok,
           f"dense defect {defect:.1e} <= 1e-13, bump symmetry {sym:.1e} <= 1e-12")


def test_criterion_04_ccr_convergence():
    details, ok = [], True
    for cfg in (SINH, SHEAR):
        r = check_ccr(cfg.build_map(), cfg.grid_levels(), cfg.bumps, order_min=1.8)
        orders = r.metrics["xp_minus_i_orders"] + r.metrics.get("pp_commutator_orders", [])
        ok &= r.passed and r.residuals["xx_commutator_max"] == 0.0
        ok &= cfg.n == 1 or "pp_commutator_order_shortfall" in r.residuals
        details.append(f"{cfg.name}: min order {min(orders):.2f}, "
                       f"[X,X] = {r.residuals['xx_commutator_max']:g}")
    report(4, "canonical commutators converge at second order", ok, "; ".join(details))


def test_criterion_05_unitary_map():
    details, ok = [], True
    for cfg in (SINH, SHEAR):
        m = cfg.build_map()
        levels = cfg.unitary_levels(m)
        iso = check_isometry(m, levels, cfg.unitary_bumps, order_min=1.0)
        ok &= iso.passed
        low = min(iso.metrics["isometry_orders"] + iso.metrics["roundtrip_orders"])
        details.append(f"{cfg.name} isometry/round-trip min order {low:.2f}")
    m = SINH.build_map()
    eq = check_unitary_equivalence(m, SINH.unitary_levels(m), SINH.unitary_bumps, order_min=1.0)
    e1_order = min(eq.metrics["momentum_equivalence_orders"])
    ok &= "momentum_equivalence_order_shortfall" in eq.residuals
    ok &= eq.residuals["momentum_equivalence_order_shortfall"] == 0.0
    details.append(f"sinh e1 min order {e1_order:.2f}")

    exact = 0.0
    g = make_grid([(-5, 5)], 101)
    bumps = [BumpSpec((0.3,), (3.0,))]
    gx, gX = make_grid([(-4, 4)], 81), make_grid([(-8, 8)], 81)
    for mm, pair, bb in ((IDENTITY, (g, g), bumps), (DOUBLE, (gx, gX), [BumpSpec((0.2,), (2.5,))])):
        r = check_unitary_equivalence(mm, [pair], bb)
        i = check_isometry(mm, [pair], bb)
        exact = max(exact, r.residuals["position_equivalence_max"], i.residuals["isometry_max"],
                    i.residuals["roundtrip_max"])
        if mm is IDENTITY:
            exact = max(exact, r.residuals["momentum_equivalence_max"])
    ok &= exact <= 1e-12
    details.append(f"identity/scaling max residual {exact:.1e} <= 1e-12")
    report(5, "unitary map is isometric and intertwines", ok, "; ".join(details))


def test_criterion_06_kernel_growth():
    ok, worst_ratio, worst_closed = True, math.inf, 0.0
    for m, Ls in ((SINH.build_map(), [1.0, 2.0, 3.0]), (IDENTITY, [2.0, 4.0, 8.0])):
        for sign in (1, -1):
            r = check_kernel_growth(m, 1, Ls, sign, growth_min=5.0)
            ok &= r.passed and r.residuals["non_increasing_steps"] == 0
            worst_ratio = min(worst_ratio, math.exp(min(r.metrics["log_ratios"])))
            if m is IDENTITY:
                for L, logI in zip(Ls, r.metrics["log_integrals"]):
                    exact = math.log((math.exp(2 * L) - math.exp(-2 * L)) / 2)
                    worst_closed = max(worst_closed, abs(math.expm1(logI - exact)))
    ok &= worst_closed <= 1e-3
    report(6, "kernel candidates are not normalisable", ok,
           f"min ratio {worst_ratio:.1f} >= 5, identity closed-form error {worst_closed:.1e} <= 1e-3")


def test_criterion_07_spectral_coverage():
    ok, details = True, []
    for name, m in (("identity", IDENTITY), ("sinh", SINH.build_map())):
        r = check_spectral_coverage(m, 1, SINH.spectral_levels, (-5.0, 5.0))
        ok &= r.passed and len(SINH.spectral_levels) >= 3
        gp = ", ".join(f"{v:.3f}" for v in r.metrics["momentum_gaps"])
        gx = ", ".join(f"{v:.3f}" for v in r.metrics["position_gaps"])
        details.append(f"{name} P gaps [{gp}] X gaps [{gx}]")
    report(7, "eigenvalue gaps in [-5,5] shrink", ok, "; ".join(details))


def test_criterion_08_classical_brackets():
    cases = [(SINH.build_map(), [(-3, 3)]), (SHEAR.build_map(), [(-3, 3)]),
             (POLAR.build_map(), POLAR_LOCAL_BOX)]
    worst = 0.0
    for m, box in cases:
        r = check_classical_brackets(m, box, 100, seed=42)
        worst = max(worst, *r.residuals.values())
    report(8, "classical Poisson brackets preserved", worst <= 1e-10,
           f"max residual {worst:.1e} <= 1e-10 over 100 samples per map")


def test_criterion_09_polar_negative_control(tmp_path, capsys):
    code = main(["run", str(REPO / "demos" / "polar.cfg"), "--out", str(tmp_path / "p.json")])
    capsys.readouterr()
    rep = json.loads((tmp_path / "p.json").read_text())
    val = rep["checks"][0]
    step = 2.0 / (POLAR.validate_samples - 1)
    near = [v for v in val["context"]["violations_nearest_origin"]
            if v["kind"] == "singular_jacobian" and math.hypot(*v["point"]) <= step]
    ok = code == 1 and val["name"] == "validate_global" and not val["pass"] and bool(near)
    ok &= "SingularJacobian" in rep["checks"][1]["context"]["error"]
    report(9, "polar-like map rejected", ok,
           f"exit {code}, singular Jacobian at {near[0]['point'] if near else None}")


def _normalised(text):
    text = re.sub(r'"(started_at|finished_at)": "[^"]*"', r'"\1": ""', text)
    return re.sub(r'"runtime_ms": \d+', '"runtime_ms": 0', text)


def test_criterion_10_determinism(tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        proc = subprocess.run([sys.executable, "-m", "pointtransform", "run",
                               str(REPO / "demos" / "sinh.cfg"), "--seed", "42", "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_text())
    same = _normalised(outs[0]) == _normalised(outs[1])
    report(10, "repeated runs give identical reports", same,
           "byte-identical after blanking started_at, finished_at and runtime_ms")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
