"""Quantum canonical operators induced by point transformations of R^n.

Maps are given as expression strings, differentiated symbolically, and the
resulting position and symmetrised momentum operators are assembled on
rectangular lattices and checked numerically.
"""

from .config import SuiteConfig, load_config, parse_config
from .diffeo import (DiffeoMap, divergence_direct, divergence_via_lemma, invert_point,
                     jacobian_at, make_map, map_from_strings, validate_global)
from .errors import (ArityError, ConfigError, ConvergenceError, DimensionError, DomainError,
                     ExprSyntaxError, GridMismatch, PointTransformError, SingularJacobian,
                     SupportError)
from .exprdsl import derive, evaluate, evaluate_many, parse, simplify, to_text
from .grid import BumpSpec, Grid, GridFunction, LinearOperator, bump, inner, make_grid, norm
from .operators import (classical_extended, momentum_flat, momentum_op, momentum_op_expanded,
                        poisson_residuals, position_op, unitary_forward, unitary_inverse)
from .verify import CheckResult, VerificationReport, run_suite

__version__ = "0.1.0"
