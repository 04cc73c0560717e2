import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from pointtransform.config import parse_config
from pointtransform.demos import demo_config
from pointtransform.diffeo import map_from_strings
from pointtransform.errors import ConfigError, DimensionError
from pointtransform.grid import BumpSpec, LinearOperator, make_grid
from pointtransform.operators import momentum_flat, momentum_op
from pointtransform.verify import (CheckResult, check_ccr, check_classical_brackets,
                                   check_hermiticity, check_isometry, check_kernel_growth,
                                   check_lemma_cal, check_spectral_coverage,
                                   check_unitary_equivalence, check_validation, observed_orders,
                                   run_suite)

IDENTITY = map_from_strings(["x1"], ["x1"])
DOUBLE = map_from_strings(["2*x1"], ["0.5*x1"])
SINH = map_from_strings(["sinh(x1)"], ["asinh(x1)"])
AFFINE3 = map_from_strings(["2*x1 + x2 - 1", "x2 + 0.5*x3", "x3 - x1 + 4"])
BUMPS_1D = [BumpSpec((0.5,), (3.0,)), BumpSpec((-1.0,), (2.5,)), BumpSpec((1.5,), (2.0,))]


def strip_timing(d):
    d = dict(d)
    d.pop("started_at")
    d.pop("finished_at")
    d["checks"] = [{k: v for k, v in c.items() if k != "runtime_ms"} for c in d["checks"]]
    return d


class TestCheckResult:
    @settings(max_examples=100, derandomize=True)
    @given(st.dictionaries(st.sampled_from("abcde"),
                           st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1))
    def test_pass_is_conjunction(self, pairs):
        r = CheckResult("x", {k: v for k, (v, _) in pairs.items()},
                        {k: t for k, (_, t) in pairs.items()})
        assert r.passed == all(v <= t for v, t in pairs.values())
        assert r.to_dict()["pass"] == r.passed

    def test_serialisable(self):
        r = CheckResult("x", {"a": np.float64(1e-3)}, {"a": 1e-2},
                        metrics={"orders": [math.inf, 2.0]}, context={"n": np.int64(3)})
        d = json.loads(json.dumps(r.to_dict()))
        assert d["tolerance"] == {"a": 0.01}
        assert d["metrics"]["orders"] == ["inf", 2.0]


class TestObservedOrders:
    def test_second_order(self):
        assert observed_orders([4e-2, 1e-2, 2.5e-3], [0.2, 0.1, 0.05]) == pytest.approx([2, 2])

    def test_rounding_level_counts_as_converged(self):
        assert observed_orders([1e-3, 1e-14], [0.2, 0.1]) == [math.inf]
        assert observed_orders([1e-14, 1e-3], [0.2, 0.1]) == [-math.inf]


class TestHermiticity:
    def test_flat_momentum(self):
        g = make_grid([(-10, 10)], 401)
        r = check_hermiticity(momentum_flat(g, 1), g, BUMPS_1D)
        assert r.residuals["symmetry"] <= 1e-13
        assert r.residuals["matrix_defect"] == 0.0
        assert r.passed and r.kind == "witness"

    def test_sinh_momentum(self):
        g = make_grid([(-10, 10)], 401)
        r = check_hermiticity(momentum_op(SINH, g, 1), g, BUMPS_1D)
        assert r.residuals["symmetry"] <= 1e-12 and r.passed

    def test_one_sided_stencil_fails(self):
        g = make_grid([(-10, 10)], 401)
        N, h = 401, g.spacing[0]
        fwd = sp.diags([-np.ones(N), np.ones(N - 1)], [0, 1]) / h
        broken = LinearOperator(g, -1j * fwd, "broken")
        r = check_hermiticity(broken, g, BUMPS_1D)
        assert r.residuals["symmetry"] > 1e-3
        assert not r.passed


class TestCCR:
    def test_identity_quarter_per_halving(self):
        grids = [make_grid([(-8, 8)], N) for N in (201, 401, 801)]
        r = check_ccr(IDENTITY, grids, [BumpSpec((0.0,), (3.0,))])
        assert r.passed
        assert r.residuals["xx_commutator_max"] == 0.0
        vals = r.metrics["xp_minus_i_per_level"]
        for a, b in zip(vals, vals[1:]):
            assert 3.5 < a / b < 4.5

    def test_needs_three_levels(self):
        grids = [make_grid([(-8, 8)], N) for N in (201, 401)]
        with pytest.raises(ConfigError):
            check_ccr(SINH, grids, BUMPS_1D)

    def test_order_shortfall_reported(self):
        grids = [make_grid([(-8, 8)], N) for N in (201, 401, 801)]
        r = check_ccr(SINH, grids, BUMPS_1D, order_min=3.0)
        assert not r.passed
        assert 0.9 < r.residuals["xp_minus_i_order_shortfall"] < 1.2

    def test_levels_must_refine(self):
        g = make_grid([(-8, 8)], 201)
        with pytest.raises(ConfigError):
            check_ccr(SINH, [g, g, g], BUMPS_1D)


class TestUnitary:
    def test_identity_exact(self):
        g = make_grid([(-5, 5)], 101)
        bumps = [BumpSpec((0.3,), (3.0,))]
        r = check_unitary_equivalence(IDENTITY, [(g, g)], bumps)
        assert r.residuals["momentum_equivalence_max"] <= 1e-12
        assert r.residuals["position_equivalence_max"] <= 1e-12
        iso = check_isometry(IDENTITY, [(g, g)], bumps)
        assert iso.residuals["isometry_max"] <= 1e-13 and iso.passed

    def test_scaling_lattice_aligned(self):
        gx, gX = make_grid([(-4, 4)], 81), make_grid([(-8, 8)], 81)
        bumps = [BumpSpec((0.2,), (2.5,))]
        r = check_unitary_equivalence(DOUBLE, [(gx, gX)], bumps)
        assert r.residuals["position_equivalence_max"] <= 1e-12
        assert check_isometry(DOUBLE, [(gx, gX)], bumps).residuals["isometry_max"] <= 1e-12

    def test_sinh_refinement(self):
        levels = [(make_grid([(-6, 6)], nx),
                   make_grid([(-math.sinh(6) + 1, math.sinh(6) - 1)], nX))
                  for nx, nX in ((241, 1001), (481, 2001), (961, 4001))]
        bumps = [BumpSpec((0.0,), (3.0,))]
        r = check_unitary_equivalence(SINH, levels, bumps)
        assert r.passed
        assert min(r.metrics["momentum_equivalence_orders"]) >= 1.0
        iso = check_isometry(SINH, levels, bumps, finest_tol=1e-4)
        assert iso.passed
        assert np.all(np.diff(iso.metrics["isometry_per_level"]) < 0)


class TestDivergenceCrossCheck:
    def test_affine_zero(self):
        r = check_lemma_cal(AFFINE3, [(-3, 3)], 200, seed=42)
        assert r.residuals["relative_gap"] <= 1e-13

    def test_sinh(self):
        r = check_lemma_cal(SINH, [(-3, 3)], 200, seed=42)
        assert r.residuals["relative_gap"] <= 1e-10

    def test_seed_determinism(self):
        a = check_lemma_cal(SINH, [(-3, 3)], 50, seed=7)
        b = check_lemma_cal(SINH, [(-3, 3)], 50, seed=7)
        assert a.residuals == b.residuals and a.metrics == b.metrics


class TestKernelGrowth:
    @pytest.mark.parametrize("sign", [1, -1])
    def test_identity_closed_form(self, sign):
        Ls = [2.0, 4.0, 8.0]
        r = check_kernel_growth(IDENTITY, 1, Ls, sign)
        assert r.passed
        for L, logI in zip(Ls, r.metrics["log_integrals"]):
            exact = math.log((math.exp(2 * L) - math.exp(-2 * L)) / 2)
            assert abs(math.expm1(logI - exact)) <= 1e-3
        for lr in r.metrics["log_ratios"]:
            assert math.exp(lr) >= 5

    @pytest.mark.parametrize("sign", [1, -1])
    def test_sinh_explodes(self, sign):
        r = check_kernel_growth(SINH, 1, [1.0, 2.0, 3.0], sign)
        assert r.passed
        assert r.metrics["log_ratios"][1] > r.metrics["log_ratios"][0] > math.log(5)

    def test_bounded_image_fails(self):
        # atan maps onto a bounded interval, so the candidate is normalisable
        m = map_from_strings(["atan(x1)"], j_min=1e-12)
        r = check_kernel_growth(m, 1, [5.0, 10.0, 20.0], 1)
        assert not r.passed

    def test_no_overflow_for_huge_exponents(self):
        r = check_kernel_growth(SINH, 1, [4.0, 6.0, 8.0], 1)
        assert all(math.isfinite(v) for v in r.metrics["log_integrals"])

    @pytest.mark.parametrize("Ls, sign", [([1.0, 2.0], 1), ([2.0, 1.0, 3.0], 1), ([1.0, 2.0, 3.0], 0)])
    def test_bad_arguments(self, Ls, sign):
        with pytest.raises(ConfigError):
            check_kernel_growth(SINH, 1, Ls, sign)


class TestSpectral:
    LEVELS = [([(-10, 10)], 201), ([(-14, 14)], 401), ([(-20, 20)], 801)]

    @pytest.mark.parametrize("m", [IDENTITY, SINH], ids=["identity", "sinh"])
    def test_gaps_shrink(self, m):
        r = check_spectral_coverage(m, 1, self.LEVELS, (-5, 5))
        assert r.passed
        assert all(np.diff(r.metrics["momentum_gaps"]) < 0)

    def test_identity_position_gap_is_spacing(self):
        r = check_spectral_coverage(IDENTITY, 1, self.LEVELS, (-5, 5))
        np.testing.assert_allclose(r.metrics["position_gaps"], [0.1, 0.07, 0.05], rtol=1e-9)

    def test_dense_limit(self):
        with pytest.raises(DimensionError):
            check_spectral_coverage(SINH, 1, [([(-5, 5)], 101), ([(-5, 5)], 6001)], (-1, 1))


class TestBrackets:
    def test_identity_zero(self):
        r = check_classical_brackets(IDENTITY, [(-3, 3)], 100)
        assert all(v == 0.0 for v in r.residuals.values())

    def test_affine(self):
        r = check_classical_brackets(AFFINE3, [(-3, 3)], 100)
        assert max(r.residuals.values()) <= 1e-13


class TestSuite:
    def test_validation_check_polar(self):
        m = map_from_strings(["sqrt(x1^2 + x2^2)", "2*atan(x2/(sqrt(x1^2 + x2^2) + x1))"])
        r = check_validation(m, [(-1, 1)], 101)
        assert not r.passed
        near = r.context["violations_nearest_origin"][0]
        assert near["point"] == [0.0, 0.0]

    def test_empty_check_list(self):
        cfg = demo_config("sinh")
        cfg.checks = []
        with pytest.raises(ConfigError):
            run_suite(cfg)

    def test_polar_skips_operator_checks(self):
        rep = run_suite(demo_config("polar-fail"))
        names = [c.name for c in rep.checks]
        assert names == ["validate_global", "operator_assembly"]
        assert "SingularJacobian" in rep.checks[1].context["error"]
        assert not rep.overall_pass

    def test_declaration_order_and_determinism(self):
        cfg = parse_config("""
[map]
dimension = 1
forward = sinh(x1)
inverse = asinh(x1)
[checks]
run = brackets lemma validate
seed = 3
[sampling]
lemma_points = 40
bracket_points = 10
""")
        a, b = run_suite(cfg), run_suite(cfg)
        assert [c.name for c in a.checks] == ["classical_brackets", "lemma_jacobian_derivative",
                                              "validate_global"]
        assert json.dumps(strip_timing(a.to_dict())) == json.dumps(strip_timing(b.to_dict()))

    def test_failing_check_does_not_abort(self):
        cfg = parse_config("""
[map]
dimension = 1
forward = atan(x1)
j_min = 1e-12
[checks]
run = kernel lemma
[kernel]
l_values = 5 10 20
""")
        rep = run_suite(cfg)
        assert [c.passed for c in rep.checks] == [False, False, True]
        assert not rep.overall_pass
