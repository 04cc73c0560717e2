"""Built-in demo configurations.

They are embedded here so ``pointtransform demo <name>`` works from any
directory; ``demos/*.cfg`` in the repository are byte-identical copies.
"""

from __future__ import annotations

from .config import SuiteConfig, parse_config

__all__ = ["DEMOS", "DEMO_FILES", "demo_config"]

SINH = """\
# One-dimensional map X = sinh(x) with its closed-form inverse.
[map]
name = sinh
dimension = 1
forward = sinh(x1)
inverse = asinh(x1)

[checks]
run = validate lemma brackets hermiticity expanded ccr isometry unitary kernel spectral
seed = 42

[validate]
box = -5 5
samples = 101

[sampling]
box = -3 3
lemma_points = 200
bracket_points = 100

[grid]
bounds = -8 8
counts = 101
refinements = 3

[bumps]
b1 = 0.5 ; 3
b2 = -1 ; 2.5
b3 = 1.5 ; 2

[unitary]
x_bounds = -6 6
x_counts = 241
image_bounds = -200.71315737 200.71315737
image_counts = 1001
refinements = 3
interpolation = linear
isometry_tol = 1e-4

[kernel]
l_values = 1 2 3
step = 0.01
growth_min = 5

[spectral]
levels = -10 10 201 ; -14 14 401 ; -20 20 801
window = -5 5

[output]
path = sinh-report.json
format = json
"""

SHEAR2D = """\
# Coupled planar map; a global diffeomorphism with J >= 3/4 but no
# closed-form inverse, so preimages come from Newton iteration.
[map]
name = shear2d
dimension = 2
forward = sinh(x1) + 0.5*tanh(x2) ; sinh(x2) + 0.5*tanh(x1)

[checks]
run = validate lemma brackets hermiticity expanded ccr isometry unitary kernel
seed = 42

[validate]
box = -4 4
samples = 41

[sampling]
box = -3 3
lemma_points = 200
bracket_points = 100

[grid]
bounds = -5 5
counts = 65
refinements = 3
bumps = b1

[bumps]
b1 = 0.3 -0.2 ; 3
b2 = 0.2 -0.1 ; 2

[unitary]
bumps = b2
x_bounds = -4 4
x_counts = 41
image_bounds = -8 8
image_counts = 41
refinements = 3
interpolation = linear

[kernel]
l_values = 1 2 3
step = 0.02
growth_min = 5

[output]
path = shear2d-report.json
format = json
"""

POLAR = """\
# Polar-like coordinates (radius, half-angle formula for the angle).
# Not a global diffeomorphism: the Jacobian degenerates at the origin and the
# angle jumps across the negative x1 axis.
[map]
name = polar
dimension = 2
forward = sqrt(x1^2 + x2^2) ; 2*atan(x2/(sqrt(x1^2 + x2^2) + x1))

[checks]
run = validate lemma brackets hermiticity ccr
seed = 42

[validate]
box = -1 1
samples = 101

[sampling]
box = 0.2 1 ; -1 1

[grid]
bounds = -1 1
counts = 21
refinements = 2

[bumps]
b1 = 0.5 0.5 ; 0.3

[output]
path = polar-report.json
format = json
"""

DEMOS = {"sinh": SINH, "shear2d": SHEAR2D, "polar-fail": POLAR}
DEMO_FILES = {"sinh": "sinh.cfg", "shear2d": "shear2d.cfg", "polar-fail": "polar.cfg"}


def demo_config(name: str) -> SuiteConfig:
    try:
        text = DEMOS[name]
    except KeyError:
        raise KeyError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}") from None
    return parse_config(text, name=name)
