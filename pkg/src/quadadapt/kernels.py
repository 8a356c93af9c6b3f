"""Hot numeric kernels with numba-jitted and pure-numpy implementations.

The numba path is used when available; set ``QUADADAPT_NUMBA=0`` to force the
pure-numpy fallback (useful for debugging and as a benchmark baseline, see
``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

USE_NUMBA = os.environ.get("QUADADAPT_NUMBA", "1") != "0"
if USE_NUMBA:
    try:
        import numba
    except ImportError:  # pragma: no cover
        USE_NUMBA = False


# -- Bernoulli function -----------------------------------------------------

def _bernoulli_scalar_py(x):
    if abs(x) < 1e-10:
        return 1.0 - x / 2.0 + x * x / 12.0
    if x > 0.0:
        # 1 - exp(-x) is overflow-free for any positive x
        return x * np.exp(-x) / (-np.expm1(-x))
    return x / np.expm1(x)


def bernoulli_np(x):
    """B(x) = x / (exp(x) - 1), overflow-safe, vectorized."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-10
    pos = (x > 0) & ~small
    neg = (x < 0) & ~small
    xs = x[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 12.0
    xp = x[pos]
    out[pos] = xp * np.exp(-xp) / (-np.expm1(-xp))
    xn = x[neg]
    out[neg] = xn / np.expm1(xn)
    return out


# -- FVSG local matrices ----------------------------------------------------
#
# Per leaf, vertices in lexicographic order 1..4 and edge set {12, 31, 24, 43}
# (bottom, left, right, top). Inputs per leaf:
#   hx, hy           edge lengths
#   eps_h[4]         harmonic edge mean of the diffusivity, edge order as above
#   psi[4]           advective potential at the vertices
#   b[4], f[4]       reaction and source at the vertices
# Output: 4x4 advection-diffusion matrix with trapezoidal-lumped reaction on
# the diagonal, and the lumped load vector.

_EDGE_I = np.array([0, 2, 1, 3], dtype=np.int64)   # i of edges 12, 31, 24, 43
_EDGE_J = np.array([1, 0, 3, 2], dtype=np.int64)   # j of edges 12, 31, 24, 43


def _fvsg_from_B(Bp, Bm, lump, fval, n):
    A = np.zeros((n, 4, 4))
    # edge order: 0 = 12, 1 = 31, 2 = 24, 3 = 43
    A[:, 0, 0] = Bm[:, 0] + Bp[:, 1]
    A[:, 0, 1] = -Bp[:, 0]
    A[:, 0, 2] = -Bm[:, 1]
    A[:, 1, 0] = -Bm[:, 0]
    A[:, 1, 1] = Bp[:, 0] + Bm[:, 2]
    A[:, 1, 3] = -Bp[:, 2]
    A[:, 2, 0] = -Bp[:, 1]
    A[:, 2, 2] = Bp[:, 3] + Bm[:, 1]
    A[:, 2, 3] = -Bm[:, 3]
    A[:, 3, 1] = -Bm[:, 2]
    A[:, 3, 2] = -Bp[:, 3]
    A[:, 3, 3] = Bm[:, 3] + Bp[:, 2]
    for i in range(4):
        A[:, i, i] += lump[:, i]
    return A, fval


def local_fvsg_np(hx, hy, eps_h, psi, b, f):
    n = len(hx)
    # perpendicular cell edge length squared over twice the area, i.e.
    # l_perp / (2 l_edge): the scale-invariant edge-averaged weight
    ellp = np.empty((n, 4))
    ellp[:, 0] = hy
    ellp[:, 1] = hx
    ellp[:, 2] = hx
    ellp[:, 3] = hy
    area = hx * hy
    dpsi = psi[:, _EDGE_I] - psi[:, _EDGE_J]
    scale = ellp * ellp * eps_h / (2.0 * area[:, None])
    Bp = scale * bernoulli_np(dpsi)
    Bm = scale * bernoulli_np(-dpsi)
    lump = b * (area / 4.0)[:, None]
    fval = f * (area / 4.0)[:, None]
    return _fvsg_from_B(Bp, Bm, lump, fval, n)


# -- estimator quadrature ---------------------------------------------------

_GAUSS3 = np.array([0.5 - np.sqrt(3.0 / 5.0) / 2.0, 0.5,
                    0.5 + np.sqrt(3.0 / 5.0) / 2.0])
_W3 = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


def _q1_shapes(s, t):
    return np.array([(1 - s) * (1 - t), s * (1 - t), (1 - s) * t, s * t])


def _q2_1d(s):
    # quadratic Lagrange on {0, 1/2, 1}
    return np.array([2 * (s - 0.5) * (s - 1), -4 * s * (s - 1), 2 * s * (s - 0.5)])


def _q2_shapes(s, t):
    """Tensor Q2 shapes at (s, t) for the local node order
    1..4 vertices (lexicographic), 5 left, 6 right, 7 bottom, 8 top, 9 center."""
    ax = _q2_1d(s)
    ay = _q2_1d(t)
    return np.array([
        ax[0] * ay[0], ax[2] * ay[0], ax[0] * ay[2], ax[2] * ay[2],
        ax[0] * ay[1], ax[2] * ay[1], ax[1] * ay[0], ax[1] * ay[2],
        ax[1] * ay[1],
    ])


def _quad_tables():
    pts = [(s, t) for t in _GAUSS3 for s in _GAUSS3]
    w = np.array([ws * wt for wt in _W3 for ws in _W3])
    N1 = np.stack([_q1_shapes(s, t) for s, t in pts])   # (9 pts, 4)
    N2 = np.stack([_q2_shapes(s, t) for s, t in pts])   # (9 pts, 9)
    return w, N1, N2


_QW, _QN1, _QN2 = _quad_tables()


def eta_sq_np(u_corners, w_nodes, areas):
    """Per-leaf integral of (u* - u_h)^2 by tensor 3x3 Gauss-Legendre.

    u_corners: (n, 4) bilinear corner values; w_nodes: (n, 9) Q2 values.
    """
    uh = u_corners @ _QN1.T          # (n, 9 pts)
    us = w_nodes @ _QN2.T
    d = us - uh
    return (d * d) @ _QW * areas


if USE_NUMBA:
    from numba import njit

    @njit(cache=True)
    def _bernoulli_scalar_nb(x):
        if abs(x) < 1e-10:
            return 1.0 - x / 2.0 + x * x / 12.0
        if x > 0.0:
            return x * np.exp(-x) / (-np.expm1(-x))
        return x / np.expm1(x)

    @njit(cache=True)
    def bernoulli_nb(x):
        out = np.empty_like(x)
        for i in range(x.size):
            out.flat[i] = _bernoulli_scalar_nb(x.flat[i])
        return out

    @njit(cache=True)
    def local_fvsg_nb(hx, hy, eps_h, psi, b, f):
        n = hx.shape[0]
        A = np.zeros((n, 4, 4))
        F = np.empty((n, 4))
        ei = np.array([0, 2, 1, 3], dtype=np.int64)
        ej = np.array([1, 0, 3, 2], dtype=np.int64)
        for k in range(n):
            area = hx[k] * hy[k]
            Bp = np.empty(4)
            Bm = np.empty(4)
            for e in range(4):
                ellp = hy[k] if (e == 0 or e == 3) else hx[k]
                d = psi[k, ei[e]] - psi[k, ej[e]]
                scale = ellp * ellp * eps_h[k, e] / (2.0 * area)
                Bp[e] = scale * _bernoulli_scalar_nb(d)
                Bm[e] = scale * _bernoulli_scalar_nb(-d)
            A[k, 0, 0] = Bm[0] + Bp[1]
            A[k, 0, 1] = -Bp[0]
            A[k, 0, 2] = -Bm[1]
            A[k, 1, 0] = -Bm[0]
            A[k, 1, 1] = Bp[0] + Bm[2]
            A[k, 1, 3] = -Bp[2]
            A[k, 2, 0] = -Bp[1]
            A[k, 2, 2] = Bp[3] + Bm[1]
            A[k, 2, 3] = -Bm[3]
            A[k, 3, 1] = -Bm[2]
            A[k, 3, 2] = -Bp[3]
            A[k, 3, 3] = Bm[3] + Bp[2]
            for i in range(4):
                A[k, i, i] += b[k, i] * area / 4.0
                F[k, i] = f[k, i] * area / 4.0
        return A, F

    @njit(cache=True)
    def eta_sq_nb(u_corners, w_nodes, areas, N1, N2, W):
        n = u_corners.shape[0]
        out = np.empty(n)
        npts = W.shape[0]
        for k in range(n):
            acc = 0.0
            for p in range(npts):
                uh = 0.0
                for j in range(4):
                    uh += N1[p, j] * u_corners[k, j]
                us = 0.0
                for j in range(9):
                    us += N2[p, j] * w_nodes[k, j]
                d = us - uh
                acc += W[p] * d * d
            out[k] = acc * areas[k]
        return out


def bernoulli(x):
    """Overflow-safe Bernoulli function, array or scalar."""
    scalar = np.isscalar(x)
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    out = bernoulli_nb(arr) if USE_NUMBA else bernoulli_np(arr)
    return float(out[0]) if scalar else out


def local_fvsg_batch(hx, hy, eps_h, psi, b, f):
    """Batched FVSG local 4x4 matrices and lumped load vectors."""
    args = [np.ascontiguousarray(a, dtype=float)
            for a in (hx, hy, eps_h, psi, b, f)]
    if USE_NUMBA:
        return local_fvsg_nb(*args)
    return local_fvsg_np(*args)


def eta_sq_batch(u_corners, w_nodes, areas):
    """Per-leaf squared estimator integrals, 3x3 Gauss (exact for the
    degree <= 4 integrand)."""
    u_corners = np.ascontiguousarray(u_corners, dtype=float)
    w_nodes = np.ascontiguousarray(w_nodes, dtype=float)
    areas = np.ascontiguousarray(areas, dtype=float)
    if USE_NUMBA:
        return eta_sq_nb(u_corners, w_nodes, areas, _QN1, _QN2, _QW)
    return eta_sq_np(u_corners, w_nodes, areas)


def q2_eval(nodes, s, t):
    """Evaluate a 9-node biquadratic patch at local coordinates."""
    return float(np.dot(_q2_shapes(s, t), nodes))


def q2_shapes(s, t):
    return _q2_shapes(s, t)
