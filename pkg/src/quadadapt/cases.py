"""Benchmark problem definitions.

Each case bundles coefficients, Dirichlet data, the exact solution when one
is known, the initial brick mesh, and default adaptation parameters. All
cases live on the unit square. A small piecewise-constant region file format
is supported for user-defined problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .adaptivity import AdaptConfig
from .assembly import AdrCoefficients
from .forest import Forest, new_brick

__all__ = ["BenchmarkCase", "test1", "test2_rect", "test2_circle", "test3",
           "load_case", "case_by_name"]

_BOUNDARY_TOL = 1e-12


@dataclass
class BenchmarkCase:
    name: str
    coefficients: AdrCoefficients
    exact: Optional[Callable]
    exact_grad: Optional[Callable]
    brick: tuple
    domain: tuple
    uniform_level: int
    tol: float
    i_max: int
    n_ref: int = 0
    n_coarsen: int = 0
    max_level: int = 14
    stop_on_stagnation: Optional[float] = None
    params: dict = field(default_factory=dict)
    reference_targets: list = field(default_factory=list)

    def initial_forest(self, max_level: int | None = None,
                       min_level: int = 0) -> Forest:
        return new_brick(self.brick[0], self.brick[1], self.domain,
                         uniform_level=self.uniform_level,
                         max_level=self.max_level if max_level is None
                         else min(max_level, self.max_level),
                         min_level=min_level)

    def adapt_config(self, **overrides) -> AdaptConfig:
        kw = dict(tol=self.tol, i_max=self.i_max, n_ref=self.n_ref,
                  n_coarsen=self.n_coarsen, max_level=self.max_level,
                  stop_on_stagnation=self.stop_on_stagnation)
        kw.update(overrides)
        return AdaptConfig(**kw)


def _on_boundary(x, y):
    return (x < _BOUNDARY_TOL or x > 1.0 - _BOUNDARY_TOL or
            y < _BOUNDARY_TOL or y > 1.0 - _BOUNDARY_TOL)


def test1() -> BenchmarkCase:
    """Diffusion-reaction with boundary layers on the top and right sides.

    u = (1 - S(x))(1 - S(y)) with S(t) = sinh(t/sqrt(eps))/sinh(1/sqrt(eps)),
    so f = S(x)(1 - S(y)) + (1 - S(x))S(y) + (1 - S(x))(1 - S(y)).
    """
    eps = 1e-4
    rs = 1.0 / math.sqrt(eps)
    denom = math.sinh(rs)

    def S(t):
        return np.sinh(t * rs) / denom

    def dS(t):
        return rs * np.cosh(t * rs) / denom

    def u_ex(x, y):
        return (1.0 - S(x)) * (1.0 - S(y))

    def grad_ex(x, y):
        return (-dS(x) * (1.0 - S(y)), -(1.0 - S(x)) * dS(y))

    def f(x, y):
        sx, sy = S(x), S(y)
        return sx * (1.0 - sy) + (1.0 - sx) * sy + (1.0 - sx) * (1.0 - sy)

    coeffs = AdrCoefficients(
        epsilon=lambda x, y: np.full_like(np.asarray(x, dtype=float), eps),
        b=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        f=f,
        dirichlet_predicate=_on_boundary,
        dirichlet_data=u_ex)
    return BenchmarkCase(
        name="test1", coefficients=coeffs, exact=u_ex, exact_grad=grad_ex,
        brick=(4, 4), domain=(0.0, 0.0, 1.0, 1.0), uniform_level=0,
        tol=1e-5, i_max=10, n_ref=10, n_coarsen=3, max_level=12,
        params={"epsilon": eps},
        reference_targets=[("metric_iterations_max", 5, 0),
                           ("marking_margin_min", 3, 0)])


def test2_rect() -> BenchmarkCase:
    """Diffusion-reaction with a rectilinear coefficient jump at y = 0.5.

    One-dimensional exact solution with an interior layer below the
    interface; Dirichlet on y = 0 and y = 1, zero-flux lateral sides.
    """
    e1, e2 = 5e-5, 1e-1
    r1 = math.sqrt(e1)
    ch = math.cosh(0.5 / r1)
    sh = math.sinh(0.5 / r1)
    c1 = -7.0 * e2 / (8.0 * r1 * ch + 16.0 * e2 * sh)
    c2 = 7.0 * r1 * ch / (4.0 * r1 * ch + 8.0 * e2 * sh)

    def lower(y):
        return y <= 0.5

    def piecewise(y, lo, hi):
        y = np.asarray(y, dtype=float)
        return np.where(lower(y), lo, hi)

    def u_ex(x, y):
        y = np.asarray(y, dtype=float)
        ya = np.minimum(y, 0.5)        # keep sinh argument in range
        u1 = 1.0 + 2.0 * c1 * np.sinh(ya / r1)
        u2 = -0.5 * (y - 1.0) * (y + 2.0 * c2)
        return np.where(lower(y), u1, u2)

    def grad_ex(x, y):
        y = np.asarray(y, dtype=float)
        ya = np.minimum(y, 0.5)
        g1 = (2.0 * c1 / r1) * np.cosh(ya / r1)
        g2 = -0.5 * (2.0 * y - 1.0 + 2.0 * c2)
        gy = np.where(lower(y), g1, g2)
        return (np.zeros_like(gy), gy)

    def on_dirichlet(x, y):
        return y < _BOUNDARY_TOL or y > 1.0 - _BOUNDARY_TOL

    def g(x, y):
        return 1.0 if y < 0.5 else 0.0

    coeffs = AdrCoefficients(
        epsilon=lambda x, y: piecewise(y, e1, e2),
        b=lambda x, y: piecewise(y, 1.0, 0.0),
        f=lambda x, y: piecewise(y, 1.0, e2),
        dirichlet_predicate=on_dirichlet,
        dirichlet_data=g)
    return BenchmarkCase(
        name="test2_rect", coefficients=coeffs, exact=u_ex,
        exact_grad=grad_ex, brick=(4, 8), domain=(0.0, 0.0, 1.0, 1.0),
        uniform_level=0, tol=1e-6, i_max=10, n_ref=12, n_coarsen=3,
        max_level=12, stop_on_stagnation=0.2,
        params={"eps1": e1, "eps2": e2, "c1": c1, "c2": c2},
        reference_targets=[("metric_iterations_max", 5, 0)])


def test2_circle() -> BenchmarkCase:
    """Pure diffusion with the diffusivity jumping across the circle of
    radius 0.25 centered in the unit square (1 outside, 100 inside).

    The exact solution is piecewise quadratic in r^2. The finest admissible
    cell side is 2^-10 (forest level 7 on the 8x8 brick), matching the
    reference mesh-size sequence.
    """
    eg, es = 1.0, 100.0
    R = 0.25
    R2 = R * R

    def r2(x, y):
        return (np.asarray(x, dtype=float) - 0.5) ** 2 + \
            (np.asarray(y, dtype=float) - 0.5) ** 2

    def outside(x, y):
        return r2(x, y) >= R2

    def u_ex(x, y):
        rr = r2(x, y)
        out = 0.125 - rr / (4.0 * eg)
        inn = 0.125 - rr / (4.0 * es) - (R2 / 4.0) * (1.0 - 1.0 / es)
        return np.where(rr >= R2, out, inn)

    def grad_ex(x, y):
        rr = r2(x, y)
        fac = np.where(rr >= R2, -1.0 / (2.0 * eg), -1.0 / (2.0 * es))
        return (fac * (np.asarray(x, dtype=float) - 0.5),
                fac * (np.asarray(y, dtype=float) - 0.5))

    coeffs = AdrCoefficients(
        epsilon=lambda x, y: np.where(outside(x, y), eg, es),
        b=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        f=lambda x, y: np.ones_like(np.asarray(x, dtype=float)),
        dirichlet_predicate=_on_boundary,
        dirichlet_data=u_ex)
    return BenchmarkCase(
        name="test2_circle", coefficients=coeffs, exact=u_ex,
        exact_grad=grad_ex, brick=(8, 8), domain=(0.0, 0.0, 1.0, 1.0),
        uniform_level=0, tol=1e-10, i_max=10, n_ref=21, n_coarsen=0,
        max_level=7, params={"eps_g": eg, "eps_s": es, "radius": R},
        reference_targets=[
            ("dofs_at_hmin_0.0110485", 14245, 0.4),
            ("error_at_hmin_0.0110485", 3.05214e-5, 2.0),
            ("final_h_min", 0.00138107, 1e-5)])


def test3(theta: float = math.pi / 4.0) -> BenchmarkCase:
    """Advection-dominated problem with a diagonal advective field.

    The advective potential psi = (x cos t + y sin t)/eps feeds the
    exponential fitting directly; Dirichlet 1 on the inflow portion
    {x=0, 0<y<=0.2} and the bottom side, 0 elsewhere. No exact solution.
    """
    eps = 1e-6
    ct, st = math.cos(theta), math.sin(theta)

    def psi(x, y):
        return (np.asarray(x, dtype=float) * ct +
                np.asarray(y, dtype=float) * st) / eps

    def g(x, y):
        if y < _BOUNDARY_TOL:
            return 1.0
        if x < _BOUNDARY_TOL and 0.0 < y <= 0.2:
            return 1.0
        return 0.0

    coeffs = AdrCoefficients(
        epsilon=lambda x, y: np.full_like(np.asarray(x, dtype=float), eps),
        b=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        f=lambda x, y: np.zeros_like(np.asarray(x, dtype=float)),
        psi=psi,
        dirichlet_predicate=_on_boundary,
        dirichlet_data=g)
    return BenchmarkCase(
        name="test3", coefficients=coeffs, exact=None, exact_grad=None,
        brick=(4, 4), domain=(0.0, 0.0, 1.0, 1.0), uniform_level=0,
        tol=1e-6, i_max=10, n_ref=12, n_coarsen=0, max_level=6,
        params={"epsilon": eps, "theta": theta, "c1": 1.0, "c2": 0.05},
        reference_targets=[("metric_dofs_below_marking", 1, 0)])


_CASES = {"test1": test1, "test2_rect": test2_rect,
          "test2_circle": test2_circle, "test3": test3}


def case_by_name(name: str) -> BenchmarkCase:
    try:
        return _CASES[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; "
                         f"choose from {sorted(_CASES)}") from None


# -- piecewise-constant region files ----------------------------------------
#
# Expression-free user problems: a background value set plus rectangle and
# circle overrides, later lines winning. Example:
#
#   domain 0 0 1 1
#   brick 4 4
#   level 1
#   background eps=1.0 b=0.0 f=1.0
#   rect 0 0 1 0.5 eps=0.01
#   circle 0.5 0.5 0.25 eps=100 f=0
#   dirichlet 0.0


def _parse_values(tokens):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ValueError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        if k not in ("eps", "b", "f"):
            raise ValueError(f"unknown coefficient {k!r}")
        out[k] = float(v)
    return out


def load_case(path) -> BenchmarkCase:
    """Benchmark case from a piecewise-constant region file."""
    domain = (0.0, 0.0, 1.0, 1.0)
    brick = (1, 1)
    level = 0
    background = {"eps": 1.0, "b": 0.0, "f": 0.0}
    regions = []           # ("rect", x0, y0, x1, y1, values) / ("circle", ...)
    gval = 0.0
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "domain":
                    domain = tuple(float(v) for v in tok[1:5])
                elif tok[0] == "brick":
                    brick = (int(tok[1]), int(tok[2]))
                elif tok[0] == "level":
                    level = int(tok[1])
                elif tok[0] == "background":
                    background.update(_parse_values(tok[1:]))
                elif tok[0] == "rect":
                    vals = _parse_values(tok[5:])
                    regions.append(("rect", *map(float, tok[1:5]), vals))
                elif tok[0] == "circle":
                    vals = _parse_values(tok[4:])
                    regions.append(("circle", *map(float, tok[1:4]), vals))
                elif tok[0] == "dirichlet":
                    gval = float(tok[1])
                else:
                    raise ValueError(f"unknown directive {tok[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{ln}: {exc}") from None

    def make_field(key):
        def fn(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            out = np.full_like(x, background[key])
            for reg in regions:
                if key not in reg[-1]:
                    continue
                if reg[0] == "rect":
                    _, x0, y0, x1, y1, vals = reg
                    m = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
                else:
                    _, cx, cy, r, vals = reg
                    m = (x - cx) ** 2 + (y - cy) ** 2 <= r * r
                out = np.where(m, vals[key], out)
            return out
        return fn

    x0d, y0d, x1d, y1d = domain

    def on_boundary(x, y):
        t = _BOUNDARY_TOL * max(x1d - x0d, y1d - y0d)
        return (x < x0d + t or x > x1d - t or y < y0d + t or y > y1d - t)

    coeffs = AdrCoefficients(
        epsilon=make_field("eps"), b=make_field("b"), f=make_field("f"),
        dirichlet_predicate=on_boundary,
        dirichlet_data=lambda x, y: gval)
    return BenchmarkCase(
        name="custom", coefficients=coeffs, exact=None, exact_grad=None,
        brick=brick, domain=domain, uniform_level=level,
        tol=1e-6, i_max=10)
