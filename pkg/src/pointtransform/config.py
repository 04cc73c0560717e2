"""Suite configuration: an INI-style text format read with :mod:`configparser`.

See README.md for the full grammar.  Short version::

    [map]
    dimension = 1
    forward = sinh(x1)
    inverse = asinh(x1)

    [grid]
    bounds = -8 8
    counts = 101
    refinements = 3

Multi-component values (expressions, per-axis bounds, refinement levels) are
separated by ``;``; numbers within one component by whitespace.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .diffeo import DEFAULT_J_MIN, DiffeoMap, map_from_strings
from .errors import ConfigError, PointTransformError
from .grid import BumpSpec, Grid, make_grid

__all__ = ["SuiteConfig", "load_config", "parse_config", "ALL_CHECKS", "DEFAULT_SEED"]

ALL_CHECKS = ("validate", "lemma", "brackets", "hermiticity", "expanded", "ccr",
              "isometry", "unitary", "kernel", "spectral")
DEFAULT_SEED = 42
_KEYS = {
    "map": {"name", "dimension", "forward", "inverse", "j_min"},
    "checks": {"run", "seed"},
    "validate": {"box", "samples"},
    "sampling": {"box", "lemma_points", "bracket_points"},
    "grid": {"bounds", "counts", "refinements", "bumps"},
    "bumps": None,                      # free-form bump names
    "unitary": {"x_bounds", "x_counts", "image_bounds", "image_counts", "refinements",
                "interpolation", "isometry_tol", "bumps"},
    "kernel": {"l_values", "step", "growth_min"},
    "spectral": {"levels", "window"},
    "output": {"path", "format"},
}


@dataclass
class SuiteConfig:
    n: int
    forward: list
    inverse: list | None = None
    j_min: float = DEFAULT_J_MIN
    name: str = "suite"
    checks: list = field(default_factory=lambda: list(ALL_CHECKS))
    seed: int = DEFAULT_SEED
    validate_box: list = field(default_factory=lambda: [(-5.0, 5.0)])
    validate_samples: int = 101
    sample_box: list = field(default_factory=lambda: [(-3.0, 3.0)])
    lemma_points: int = 200
    bracket_points: int = 100
    grid_bounds: list = field(default_factory=lambda: [(-8.0, 8.0)])
    grid_counts: list = field(default_factory=lambda: [101])
    grid_refinements: int = 3
    bumps: list = field(default_factory=list)
    unitary_bumps: list = field(default_factory=list)
    x_bounds: list | None = None
    x_counts: list | None = None
    image_bounds: list | None = None       # None means derive from the map
    image_counts: list | None = None
    unitary_refinements: int = 3
    interpolation: str = "linear"
    isometry_tol: float | None = None
    l_values: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    kernel_step: float = 0.01
    growth_min: float = 5.0
    spectral_levels: list = field(default_factory=list)
    window: tuple = (-5.0, 5.0)
    output_path: str | None = None
    output_format: str = "json"

    def build_map(self) -> DiffeoMap:
        return map_from_strings(self.forward, self.inverse, self.j_min, self.n)

    def grid_levels(self) -> list:
        g = make_grid(_per_axis(self.grid_bounds, self.n, "grid.bounds"),
                      _per_axis(self.grid_counts, self.n, "grid.counts"))
        out = [g]
        for _ in range(self.grid_refinements):
            out.append(out[-1].refined())
        return out

    def unitary_levels(self, m: DiffeoMap) -> list:
        from .operators import image_grid
        if self.x_bounds is None:
            raise ConfigError("unitary checks need x_bounds", "unitary.x_bounds")
        gx = make_grid(_per_axis(self.x_bounds, self.n, "unitary.x_bounds"),
                       _per_axis(self.x_counts, self.n, "unitary.x_counts"))
        counts = _per_axis(self.image_counts, self.n, "unitary.image_counts")
        if self.image_bounds is None:
            gX = image_grid(m, gx, tuple(counts))
        else:
            gX = make_grid(_per_axis(self.image_bounds, self.n, "unitary.image_bounds"), counts)
        out = [(gx, gX)]
        for _ in range(self.unitary_refinements):
            a, b = out[-1]
            out.append((a.refined(), b.refined()))
        return out

    def echo(self) -> dict:
        """Plain-data view of the configuration, embedded in reports."""
        return {
            "name": self.name, "dimension": self.n, "forward": list(self.forward),
            "inverse": None if self.inverse is None else list(self.inverse),
            "j_min": self.j_min, "checks": list(self.checks), "seed": self.seed,
            "interpolation": self.interpolation,
        }


def _per_axis(values, n, where):
    if values is None:
        raise ConfigError("missing value", where)
    values = list(values)
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise ConfigError(f"expected 1 or {n} entries, got {len(values)}", where)
    return values


# ---------------------------------------------------------------------------
# value parsers

def _floats(text, where):
    try:
        vals = [float(t) for t in text.split()]
    except ValueError:
        raise ConfigError(f"expected numbers, got {text!r}", where) from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"expected finite numbers, got {text!r}", where)
    return vals


def _int(text, where, minimum=None):
    try:
        v = int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}", where) from None
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}, got {v}", where)
    return v


def _float(text, where):
    vals = _floats(text, where)
    if len(vals) != 1:
        raise ConfigError(f"expected one number, got {text!r}", where)
    return vals[0]


def _parts(text):
    return [p.strip() for p in text.split(";") if p.strip()]


def _intervals(text, where):
    out = []
    for part in _parts(text):
        vals = _floats(part, where)
        if len(vals) != 2 or not vals[0] < vals[1]:
            raise ConfigError(f"expected 'a b' with a < b, got {part!r}", where)
        out.append((vals[0], vals[1]))
    if not out:
        raise ConfigError("empty interval list", where)
    return out


def _counts(text, where):
    return [_int(t, where, 3) for t in text.split()]


def _bump(text, where):
    parts = _parts(text)
    if len(parts) != 2:
        raise ConfigError(f"expected 'center ; radius', got {text!r}", where)
    return BumpSpec(tuple(_floats(parts[0], where)), tuple(_floats(parts[1], where)))


# ---------------------------------------------------------------------------
# loading

def load_config(path) -> SuiteConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}", "file") from None
    return parse_config(text, name=path.stem)


def parse_config(text: str, name: str = "suite") -> SuiteConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(str(err).splitlines()[0], "file") from None
    if cp.defaults():
        raise ConfigError("keys outside any section are not allowed", "file")
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]", section)
        allowed = _KEYS[section]
        for key in cp[section]:
            if allowed is not None and key not in allowed:
                raise ConfigError(f"unknown key {key!r}", f"{section}.{key}")
    if not cp.has_section("map"):
        raise ConfigError("missing [map] section", "map")

    def get(section, key, default=None):
        if cp.has_option(section, key):
            return cp.get(section, key).strip()
        return default

    if get("map", "forward") is None:
        raise ConfigError("required field missing", "map.forward")
    if get("map", "dimension") is None:
        raise ConfigError("required field missing", "map.dimension")
    n = _int(get("map", "dimension"), "map.dimension", 1)
    forward = _parts(get("map", "forward"))
    if len(forward) != n:
        raise ConfigError(f"dimension is {n} but {len(forward)} forward expression(s) given",
                          "map.forward")
    inverse = get("map", "inverse")
    if inverse is not None:
        inverse = _parts(inverse)
        if len(inverse) != n:
            raise ConfigError(f"dimension is {n} but {len(inverse)} inverse expression(s) given",
                              "map.inverse")
    cfg = SuiteConfig(n=n, forward=forward, inverse=inverse,
                      name=get("map", "name", name))
    if get("map", "j_min") is not None:
        cfg.j_min = _float(get("map", "j_min"), "map.j_min")

    run = get("checks", "run")
    if run is not None:
        cfg.checks = [c.strip() for c in run.replace(",", " ").split()]
        for c in cfg.checks:
            if c not in ALL_CHECKS:
                raise ConfigError(f"unknown check {c!r}; choose from {', '.join(ALL_CHECKS)}",
                                  "checks.run")
    if get("checks", "seed") is not None:
        cfg.seed = _int(get("checks", "seed"), "checks.seed", 0)

    if get("validate", "box") is not None:
        cfg.validate_box = _intervals(get("validate", "box"), "validate.box")
    if get("validate", "samples") is not None:
        cfg.validate_samples = _int(get("validate", "samples"), "validate.samples", 2)

    if get("sampling", "box") is not None:
        cfg.sample_box = _intervals(get("sampling", "box"), "sampling.box")
    if get("sampling", "lemma_points") is not None:
        cfg.lemma_points = _int(get("sampling", "lemma_points"), "sampling.lemma_points", 1)
    if get("sampling", "bracket_points") is not None:
        cfg.bracket_points = _int(get("sampling", "bracket_points"), "sampling.bracket_points", 1)

    if get("grid", "bounds") is not None:
        cfg.grid_bounds = _intervals(get("grid", "bounds"), "grid.bounds")
    if get("grid", "counts") is not None:
        cfg.grid_counts = _counts(get("grid", "counts"), "grid.counts")
    if get("grid", "refinements") is not None:
        cfg.grid_refinements = _int(get("grid", "refinements"), "grid.refinements", 0)

    if cp.has_section("bumps"):
        cfg.bumps = [_bump(v, f"bumps.{k}") for k, v in cp["bumps"].items()]
        named = dict(zip(cp["bumps"].keys(), cfg.bumps))
    else:
        named = {}
    for b in cfg.bumps:
        if len(b.center) != n or len(b.radius) not in (1, n):
            raise ConfigError(f"bump needs {n} center entries and 1 or {n} radii", "bumps")

    all_bumps = list(cfg.bumps)
    cfg.bumps = _select(named, get("grid", "bumps"), all_bumps, "grid.bumps")
    cfg.unitary_bumps = _select(named, get("unitary", "bumps"), all_bumps, "unitary.bumps")
    if get("unitary", "x_bounds") is not None:
        cfg.x_bounds = _intervals(get("unitary", "x_bounds"), "unitary.x_bounds")
    if get("unitary", "x_counts") is not None:
        cfg.x_counts = _counts(get("unitary", "x_counts"), "unitary.x_counts")
    ib = get("unitary", "image_bounds")
    if ib is not None and ib != "auto":
        cfg.image_bounds = _intervals(ib, "unitary.image_bounds")
    if get("unitary", "image_counts") is not None:
        cfg.image_counts = _counts(get("unitary", "image_counts"), "unitary.image_counts")
    elif cfg.x_counts is not None:
        cfg.image_counts = list(cfg.x_counts)
    if get("unitary", "refinements") is not None:
        cfg.unitary_refinements = _int(get("unitary", "refinements"), "unitary.refinements", 0)
    if get("unitary", "interpolation") is not None:
        cfg.interpolation = get("unitary", "interpolation")
        if cfg.interpolation not in ("linear", "cubic"):
            raise ConfigError("expected 'linear' or 'cubic'", "unitary.interpolation")
    if get("unitary", "isometry_tol") is not None:
        cfg.isometry_tol = _float(get("unitary", "isometry_tol"), "unitary.isometry_tol")

    if get("kernel", "l_values") is not None:
        cfg.l_values = _floats(get("kernel", "l_values"), "kernel.l_values")
    if get("kernel", "step") is not None:
        cfg.kernel_step = _float(get("kernel", "step"), "kernel.step")
        if not cfg.kernel_step > 0:
            raise ConfigError("must be positive", "kernel.step")
    if get("kernel", "growth_min") is not None:
        cfg.growth_min = _float(get("kernel", "growth_min"), "kernel.growth_min")

    if get("spectral", "levels") is not None:
        levels = []
        for part in _parts(get("spectral", "levels")):
            vals = _floats(part, "spectral.levels")
            if len(vals) != 3 or vals[2] != int(vals[2]):
                raise ConfigError(f"expected 'a b N', got {part!r}", "spectral.levels")
            levels.append(([(vals[0], vals[1])] * n, int(vals[2])))
        cfg.spectral_levels = levels
    if get("spectral", "window") is not None:
        w = _floats(get("spectral", "window"), "spectral.window")
        if len(w) != 2 or not w[0] < w[1]:
            raise ConfigError("expected 'lo hi' with lo < hi", "spectral.window")
        cfg.window = (w[0], w[1])

    cfg.output_path = get("output", "path")
    fmt = get("output", "format")
    if fmt is not None:
        if fmt not in ("json", "csv"):
            raise ConfigError("expected 'json' or 'csv'", "output.format")
        cfg.output_format = fmt

    _check_consistency(cfg)
    return cfg


def _select(named, sel, default, where):
    if sel is None:
        return default
    try:
        return [named[k] for k in sel.split()]
    except KeyError as err:
        raise ConfigError(f"no bump named {err.args[0]!r}", where) from None


def _check_consistency(cfg: SuiteConfig):
    try:
        cfg.build_map()
    except ConfigError:
        raise
    except PointTransformError as err:
        raise ConfigError(str(err), "map") from None
    grid_checks = {"hermiticity", "expanded", "ccr"} & set(cfg.checks)
    if grid_checks:
        if not cfg.bumps:
            raise ConfigError(f"checks {sorted(grid_checks)} need at least one bump", "bumps")
        cfg.grid_levels()
    if {"isometry", "unitary"} & set(cfg.checks):
        if cfg.x_bounds is None or cfg.x_counts is None:
            raise ConfigError("unitary checks need x_bounds and x_counts", "unitary")
        if not cfg.unitary_bumps:
            raise ConfigError("unitary checks need at least one bump", "unitary.bumps")
    if "spectral" in cfg.checks and len(cfg.spectral_levels) < 2:
        raise ConfigError("spectral check needs at least two levels", "spectral.levels")
