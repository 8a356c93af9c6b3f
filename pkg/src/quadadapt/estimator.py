"""Recovery-based a posteriori error estimation.

The local estimator is the L2 distance between the recovered biquadratic and
the discrete bilinear solution on each leaf; the global estimator is the
root-sum-square over leaves in fixed z-order. Exact-error norms against
analytic references and the area-averaged gradient indicator used for
comparison runs live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .forest import MeshView
from .recovery import RecoveredGradient, RecoveredSolution
from .space import NodalField

__all__ = ["ErrorEstimate", "estimate", "exact_error", "gradient_error",
           "effectivity", "gradient_indicator", "gradient_marking"]


@dataclass
class ErrorEstimate:
    eta_k: np.ndarray           # per leaf, z-order
    eta: float
    n_el: int


def _corner_values(u: NodalField, mesh: MeshView) -> np.ndarray:
    return u.expanded()[mesh.cell_to_vertex]


def estimate(u: NodalField, w: RecoveredSolution, mesh: MeshView) -> ErrorEstimate:
    """Per-leaf eta_k = ||u* - u_h||_L2(leaf) by 3x3 tensor Gauss (exact for
    the degree <= 4 integrand), global eta by ordered root-sum-square."""
    areas = np.array([c.area for c in mesh.leaves])
    sq = kernels.eta_sq_batch(_corner_values(u, mesh), w.node_values, areas)
    sq = np.maximum(sq, 0.0)
    eta_k = np.sqrt(sq)
    return ErrorEstimate(eta_k=eta_k, eta=math.sqrt(float(np.sum(sq))),
                         n_el=mesh.n_leaves)


def _gauss_1d(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _leaf_geometry(mesh: MeshView):
    x0 = np.array([c.anchor[0] for c in mesh.leaves])
    y0 = np.array([c.anchor[1] for c in mesh.leaves])
    hx = np.array([c.extent[0] for c in mesh.leaves])
    hy = np.array([c.extent[1] for c in mesh.leaves])
    return x0, y0, hx, hy


def _tensor_points(order: int):
    g, w = _gauss_1d(order)
    s = np.repeat(g, order)
    t = np.tile(g, order)
    ww = np.repeat(w, order) * np.tile(w, order)
    return s, t, ww


def exact_error(approx, exact, mesh: MeshView, quad_order: int = 5) -> float:
    """sqrt(sum_leaf int (approx - exact)^2), tensor Gauss per leaf.

    ``approx`` is a NodalField (bilinear) or RecoveredSolution (biquadratic);
    ``exact(x, y)`` must accept arrays.
    """
    s, t, ww = _tensor_points(quad_order)
    x0, y0, hx, hy = _leaf_geometry(mesh)
    X = x0[:, None] + np.outer(hx, s)
    Y = y0[:, None] + np.outer(hy, t)

    if isinstance(approx, RecoveredSolution):
        shapes = np.stack([kernels.q2_shapes(si, ti) for si, ti in zip(s, t)])
        vals = approx.node_values @ shapes.T
    elif isinstance(approx, NodalField):
        c = approx.expanded()[mesh.cell_to_vertex]
        shapes = np.stack([kernels._q1_shapes(si, ti) for si, ti in zip(s, t)])
        vals = c @ shapes.T
    else:
        raise TypeError(f"unsupported field type {type(approx)!r}")

    d = vals - exact(X, Y)
    per_leaf = (d * d) @ ww * (hx * hy)
    return math.sqrt(float(np.sum(per_leaf)))


def gradient_error(approx, exact_grad, mesh: MeshView,
                   quad_order: int = 5) -> float:
    """L2 norm of the gradient error.

    ``approx`` is a NodalField (gradient of the bilinear interpolant) or a
    RecoveredGradient (bilinear interpolation of the vertex vectors);
    ``exact_grad(x, y)`` returns (dx, dy) arrays.
    """
    s, t, ww = _tensor_points(quad_order)
    x0, y0, hx, hy = _leaf_geometry(mesh)
    X = x0[:, None] + np.outer(hx, s)
    Y = y0[:, None] + np.outer(hy, t)

    if isinstance(approx, RecoveredGradient):
        shapes = np.stack([kernels._q1_shapes(si, ti) for si, ti in zip(s, t)])
        cx = approx.values[mesh.cell_to_vertex, 0]
        cy = approx.values[mesh.cell_to_vertex, 1]
        gx = cx @ shapes.T
        gy = cy @ shapes.T
    elif isinstance(approx, NodalField):
        c = approx.expanded()[mesh.cell_to_vertex]
        # d/ds and d/dt of the bilinear shapes, scaled by the cell extents
        ds = np.stack([np.array([-(1 - ti), (1 - ti), -ti, ti])
                       for ti in t])
        dt = np.stack([np.array([-(1 - si), -si, (1 - si), si])
                       for si in s])
        gx = (c @ ds.T) / hx[:, None]
        gy = (c @ dt.T) / hy[:, None]
    else:
        raise TypeError(f"unsupported field type {type(approx)!r}")

    ex, ey = exact_grad(X, Y)
    d2 = (gx - ex) ** 2 + (gy - ey) ** 2
    per_leaf = d2 @ ww * (hx * hy)
    return math.sqrt(float(np.sum(per_leaf)))


def effectivity(eta: float, exact_err: float) -> float:
    """Effectivity index eta / ||u - u_h||."""
    if exact_err == 0.0:
        raise ValueError("effectivity undefined for zero exact error")
    return eta / exact_err


_G2 = 0.5 + np.array([-1.0, 1.0]) / (2.0 * math.sqrt(3.0))


def gradient_indicator(u: NodalField, mesh: MeshView) -> np.ndarray:
    """Area-averaged gradient norm gamma_k = ||grad u_h||_L2(leaf) / |leaf|,
    2x2 Gauss (exact: the squared bilinear gradient is biquadratic)."""
    uv = u.expanded()
    c = uv[mesh.cell_to_vertex]
    _, _, hx, hy = _leaf_geometry(mesh)
    acc = np.zeros(len(hx))
    for si in _G2:
        for ti in _G2:
            ds = np.array([-(1 - ti), (1 - ti), -ti, ti])
            dt = np.array([-(1 - si), -si, (1 - si), si])
            gx = (c @ ds) / hx
            gy = (c @ dt) / hy
            acc += 0.25 * (gx * gx + gy * gy)
    norms = np.sqrt(acc * hx * hy)
    return norms / (hx * hy)


def gradient_marking(gamma: np.ndarray, c1: float, c2: float):
    """Index sets (refine, coarsen) from the mean-threshold inequalities
    gamma_k >= c1 * mean(gamma) and gamma_k <= c2 * mean(gamma)."""
    mean = float(np.mean(gamma)) if len(gamma) else 0.0
    refine = np.nonzero(gamma >= c1 * mean)[0]
    coarsen = np.nonzero(gamma <= c2 * mean)[0]
    return refine, coarsen


def write_estimate_csv(est: ErrorEstimate, mesh: MeshView, path) -> None:
    """Per-leaf estimator values: leaf id (tree, level, morton) and eta_k."""
    with open(path, "w") as fh:
        fh.write("tree,level,morton,eta_k\n")
        for c, e in zip(mesh.leaves, est.eta_k):
            fh.write(f"{c.tree_id},{c.level},{c.morton},{float(e)!r}\n")
