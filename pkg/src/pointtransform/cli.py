"""Command line interface: ``pointtransform run|demo|print-operator``.

Exit codes: 0 all checks passed, 1 some check failed, 2 configuration or
assembly error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .config import SuiteConfig, load_config
from .demos import DEMOS, demo_config
from .errors import ConfigError, PointTransformError
from .exprdsl import evaluate_many
from .grid import make_grid
from .operators import momentum_coefficients
from .verify import VerificationReport, run_suite

__all__ = ["main", "render_report", "write_atomic", "sinh_coefficient_table"]

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def render_report(report: VerificationReport, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        fields = ["check", "kind", "residual", "value", "tolerance", "pass"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for row in report.rows():
            w.writerow({**row, "value": repr(row["value"]), "tolerance": repr(row["tolerance"])})
        return buf.getvalue()
    raise ConfigError(f"unknown format {fmt!r}", "format")


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the target directory and rename it into place."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _summary(report: VerificationReport, out=None):
    out = out or sys.stdout
    for c in report.checks:
        flag = "PASS" if c.passed else "FAIL"
        worst = ", ".join(f"{k}={v:.3g}" for k, v in c.residuals.items())
        print(f"{flag}  {c.name:<34} [{c.kind}] {worst}", file=out)
        if "error" in c.context:
            print(f"      {c.context['error']}", file=out)
    print("overall: " + ("PASS" if report.overall_pass else "FAIL"), file=out)


def _execute(cfg: SuiteConfig, out_path, fmt):
    report = run_suite(cfg)
    _summary(report)
    if out_path is not None:
        write_atomic(out_path, render_report(report, fmt))
        print(f"report written to {out_path}")
    return EXIT_OK if report.overall_pass else EXIT_FAIL, report


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        fmt = args.format or cfg.output_format
        out = args.out or cfg.output_path or f"{Path(args.config).stem}-report.{fmt}"
        code, _ = _execute(cfg, out, fmt)
        return code
    except PointTransformError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as err:
        print(f"error: cannot write report: {err}", file=sys.stderr)
        return EXIT_ERROR


def sinh_coefficient_table(bounds=(-10.0, 10.0), count=401):
    """Derived coefficients of ``P = -i (c(x) d/dx + b(x)/2)`` for X = sinh x
    against ``c = 1/cosh x`` and ``b/2 = -tanh x / (2 cosh x)``.

    Returns (c_expr, b_expr, max discrepancy).  The discrepancy covers both the
    symbolic expressions and the numerically assembled lattice coefficients.
    """
    m = demo_config("sinh").build_map()
    g = make_grid([bounds], count)
    x = g.points[:, 0]
    c_expr = m.inverse_jacobian_exprs[0][0]
    b_expr = m.divergence_exprs[0]
    c_sym = evaluate_many(c_expr, [x])
    d_sym = 0.5 * evaluate_many(b_expr, [x])
    inv, b = momentum_coefficients(m, g)
    c_ref = 1.0 / np.cosh(x)
    d_ref = -0.5 * np.tanh(x) / np.cosh(x)
    gap = max(np.max(np.abs(c_sym - c_ref)), np.max(np.abs(d_sym - d_ref)),
              np.max(np.abs(inv[:, 0, 0] - c_ref)), np.max(np.abs(0.5 * b[:, 0] - d_ref)))
    return c_expr, b_expr, float(gap)


def cmd_demo(args) -> int:
    try:
        cfg = demo_config(args.name)
        code, report = _execute(cfg, args.out, args.format or "json")
    except PointTransformError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    if args.name == "sinh":
        c_expr, b_expr, gap = sinh_coefficient_table()
        print()
        print("P = -i ( c(x) d/dx + b(x)/2 )")
        print(f"  c(x) derived     : {c_expr}")
        print("  c(x) closed form : 1/cosh(x)")
        print(f"  b(x) derived     : {b_expr}")
        print("  b(x) closed form : -tanh(x)/cosh(x)")
        print(f"  max discrepancy on [-10, 10], N = 401: {gap:.3e}")
        if gap > 1e-12:
            code = EXIT_FAIL
    elif args.name == "polar-fail":
        print()
        print("The polar-like map is not a global diffeomorphism of the plane:")
        for c in report.checks:
            if c.name == "validate_global":
                for v in c.context["violations_nearest_origin"][:3]:
                    print(f"  {v['kind']} at x = {tuple(v['point'])}: {v['detail']}")
            if c.name == "operator_assembly":
                print(f"  operator assembly refused: {c.context.get('error', '')}")
    return code


def cmd_print_operator(args) -> int:
    try:
        cfg = load_config(args.config)
        m = cfg.build_map()
        a = args.alpha
        if not 1 <= a <= m.n:
            raise ConfigError(f"alpha must lie in 1..{m.n}", "alpha")
        cols = [m.inverse_jacobian_exprs[b][a - 1] for b in range(m.n)]
        div = m.divergence_exprs[a - 1]
    except PointTransformError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    print(f"P{a} = -i * sum_b c_b(x) d/dx_b - (i/2) * b{a}(x)")
    for b, e in enumerate(cols, start=1):
        print(f"c_{b}(x) = dx{b}/dX{a} = {e}")
    print(f"b{a}(x) = {div}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pointtransform",
                                description="Build and verify canonical operators "
                                            "induced by a point transformation.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the check suite described by a config file")
    r.add_argument("config")
    r.add_argument("--out", help="report path (default: [output] path of the config)")
    r.add_argument("--format", choices=("json", "csv"))
    r.add_argument("--seed", type=_u64, help="override the sampling seed")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("demo", help="run a built-in demo")
    d.add_argument("name", choices=sorted(DEMOS))
    d.add_argument("--out", help="also write the report here")
    d.add_argument("--format", choices=("json", "csv"))
    d.set_defaults(func=cmd_demo)

    o = sub.add_parser("print-operator", help="print the symbolic momentum coefficients")
    o.add_argument("config")
    o.add_argument("--alpha", type=int, required=True)
    o.set_defaults(func=cmd_print_operator)
    return p


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
