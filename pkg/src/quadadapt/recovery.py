"""Gradient and solution recovery on non-conforming quadtree meshes.

The gradient is recovered at mesh vertices from tangential edge finite
differences with reciprocal-length weights, falling back to a one-sided
three-point formula at domain boundaries and at partition interfaces (which
keeps the stencil partition-local). The recovered solution is a per-leaf
biquadratic built by integrating the recovered gradient along edge and
centroid paths; fine-side values on hanging faces are replaced by the coarse
side's polynomial so the result stays continuous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .forest import MeshView
from .space import NodalField, resolve_vertex_weights

__all__ = ["EdgeGradients", "RecoveredGradient", "RecoveredSolution",
           "edge_gradients", "recover_gradient", "recover_solution",
           "evaluate_recovered"]


@dataclass
class EdgeGradients:
    mesh: MeshView
    x_values: np.ndarray      # du/dx per x-edge
    y_values: np.ndarray      # du/dy per y-edge


@dataclass
class RecoveredGradient:
    mesh: MeshView
    values: np.ndarray        # (n_vertices, 2)
    fallback_vertices: list   # vertices where the single-edge fallback fired


@dataclass
class RecoveredSolution:
    mesh: MeshView
    node_values: np.ndarray   # (n_leaves, 9): 4 vertices, left/right/bottom/
                              # top midpoints, centroid


def edge_gradients(u: NodalField, mesh: MeshView) -> EdgeGradients:
    """Divided differences per minimal mesh edge (hanging endpoints use the
    constrained values)."""
    vals = u.expanded()
    xv = np.array([(vals[b] - vals[a]) / ln for a, b, ln, _ in mesh.x_edges])
    yv = np.array([(vals[b] - vals[a]) / ln for a, b, ln, _ in mesh.y_edges])
    return EdgeGradients(mesh, xv, yv)


def _edge_tables(mesh: MeshView, owner=None):
    """Per-vertex, per-direction, per-side effective stencil edges.

    A sub-edge whose far endpoint hangs on the same line acts as its full
    coarse edge: same tangential value (the constrained hanging value makes
    the two finite differences identical), doubled length, and the stencil
    continues past the far parent. An edge terminating at a vertex that
    hangs on a crossing line carries a value polluted by the constraint and
    is left out of the stencil; recovery there goes one-sided from the
    other direction.
    """
    default = owner is None
    if default:
        owner = mesh.owner
        if getattr(mesh, "_edge_tables", None) is not None:
            return mesh._edge_tables
    nv = mesh.n_vertices

    hang_pa = np.full(nv, -1, dtype=np.int64)
    hang_pb = np.full(nv, -1, dtype=np.int64)
    for v, (pa, pb) in mesh.hanging.items():
        hang_pa[v] = pa
        hang_pb[v] = pb
    is_hanging = hang_pa >= 0
    coords = mesh.vertices

    def build(edges, axis):
        ne = len(edges)
        minus = np.full(nv, -1, dtype=np.int64)   # edge ending at v
        plus = np.full(nv, -1, dtype=np.int64)    # edge starting at v
        a = np.empty(ne, dtype=np.int64)
        b = np.empty(ne, dtype=np.int64)
        ln = np.empty(ne)
        omin = np.empty(ne, dtype=np.int64)
        omax = np.empty(ne, dtype=np.int64)
        for e, (va, vb, length, leaves) in enumerate(edges):
            a[e] = va
            b[e] = vb
            ln[e] = length
            os = [owner[l] for l in leaves]
            omin[e] = min(os)
            omax[e] = max(os)
            plus[va] = e
            minus[vb] = e

        # hanging vertex whose parents are collinear with this direction
        tol = 1e-9
        inline = is_hanging & (np.abs(
            np.where(is_hanging, coords[np.maximum(hang_pa, 0), 1 - axis], 0.0)
            - np.where(is_hanging, coords[np.maximum(hang_pb, 0), 1 - axis],
                       0.0)) < tol)

        def side(eidx, far_of, cont_of):
            """Effective stencil data for one side; eidx is the per-vertex
            incident edge, far_of gives its far endpoint."""
            has = eidx >= 0
            e = np.maximum(eidx, 0)
            w = far_of[e]
            # near endpoint: for the plus side far_of is b, so near is a
            near = a[e] if far_of is b else b[e]
            w_inline = has & inline[w] & \
                ((hang_pa[w] == near) | (hang_pb[w] == near))
            w_cross = has & is_hanging[w] & ~w_inline
            far_parent = np.where(hang_pa[w] == near, hang_pb[w], hang_pa[w])
            far_eff = np.where(w_inline, far_parent, w)
            len_eff = np.where(w_inline, 2.0 * ln[e], ln[e])
            # owners of the effective edge include the sibling sub-edge
            sib = cont_of[w]
            sib_ok = w_inline & (sib >= 0)
            s = np.maximum(sib, 0)
            o_lo = np.where(sib_ok, np.minimum(omin[e], omin[s]), omin[e])
            o_hi = np.where(sib_ok, np.maximum(omax[e], omax[s]), omax[e])
            usable = has & ~w_cross
            return dict(e=e, has=has, usable=usable, far=far_eff,
                        ln=len_eff, omin=o_lo, omax=o_hi)

        ev = np.arange(nv)
        return dict(
            minus=side(minus[ev], a, minus),
            plus=side(plus[ev], b, plus),
            raw_minus=minus, raw_plus=plus, raw_ln=ln, raw_a=a, raw_b=b)

    vert_owner = np.full(nv, np.iinfo(np.int64).max, dtype=np.int64)
    for i in range(mesh.n_leaves):
        o = owner[i]
        for v in mesh.cell_to_vertex[i]:
            if o < vert_owner[v]:
                vert_owner[v] = o

    tables = (build(mesh.x_edges, 0), build(mesh.y_edges, 1), vert_owner)
    if default:
        mesh._edge_tables = tables
    return tables


def _recover_component(tab, edge_vals, vert_owner, out, fallback, clean):
    """One direction of the vertex recovery, vectorized over vertices."""
    m = tab["minus"]
    p = tab["plus"]
    pw = vert_owner

    def local(s):
        return s["usable"] & (s["omin"] == pw) & (s["omax"] == pw)

    m_ok = local(m)
    p_ok = local(p)
    vm = edge_vals[m["e"]]
    vp = edge_vals[p["e"]]
    hm = m["ln"]
    hp = p["ln"]

    two = (vm / hm + vp / hp) / (1.0 / hm + 1.0 / hp)

    def one_sided(s1):
        """Three-point formula continuing past s1's far vertex; falls back
        to the single-edge value where the continuation is unusable."""
        far = s1["far"]
        far_c = np.maximum(far, 0)
        s2_e = (p if s1 is p else m)["e"][far_c]
        s2_usable = (p if s1 is p else m)["usable"][far_c] & (far >= 0)
        s2_local = s2_usable & \
            ((p if s1 is p else m)["omin"][far_c] == pw) & \
            ((p if s1 is p else m)["omax"][far_c] == pw)
        h1 = s1["ln"]
        h2 = (p if s1 is p else m)["ln"][far_c]
        v1 = edge_vals[s1["e"]]
        v2 = edge_vals[s2_e]
        three = (v1 * (1.0 / h1 + 2.0 / h2) - v2 / h2) / \
            (1.0 / h1 + 1.0 / h2)
        return np.where(s2_local, three, v1), s2_local

    op_val, op_full = one_sided(p)
    om_val, om_full = one_sided(m)

    out[:] = np.where(
        m_ok & p_ok, two,
        np.where(p_ok, op_val,
                 np.where(m_ok, om_val, 0.0)))

    single = (p_ok & ~m_ok & ~op_full) | (m_ok & ~p_ok & ~om_full)
    clean[:] = (m_ok & p_ok) | (p_ok & op_full) | (m_ok & om_full)
    rest = ~m_ok & ~p_ok
    if np.any(rest):
        # no partition-local usable edge: take whatever exists, two-sided
        # when possible (degenerate strips and crosswise-blocked vertices)
        mu = m["usable"]
        pu = p["usable"]
        both = rest & mu & pu
        out[both] = two[both]
        only_m = rest & mu & ~pu
        out[only_m] = vm[only_m]
        only_p = rest & pu & ~mu
        out[only_p] = vp[only_p]
        hm_has = m["has"]
        hp_has = p["has"]
        none = rest & ~mu & ~pu
        out[none & hm_has] = vm[none & hm_has]
        out[none & hp_has & ~hm_has] = vp[none & hp_has & ~hm_has]
        single = single | (rest & (hm_has | hp_has))
    fallback.extend(np.nonzero(single)[0].tolist())


def recover_gradient(edges: EdgeGradients, mesh: MeshView,
                     partition=None) -> RecoveredGradient:
    """Vertex-wise recovered gradient.

    Interior vertices average the two incident edge values per direction
    with reciprocal-length weights; vertices missing a same-partition edge
    on one side use the one-sided three-point formula over the two nearest
    same-side edges. A hanging vertex takes its tangential component from
    the incident sub-edge (whose constrained finite difference equals the
    full coarse-edge value) and its normal component from linear
    extrapolation along the fine line through it.
    """
    owner = None
    if partition is not None:
        owner = np.array([partition[c.key] for c in mesh.leaves],
                         dtype=np.int64)
    xt, yt, vert_owner = _edge_tables(mesh, owner)
    nv = mesh.n_vertices
    values = np.zeros((nv, 2))
    clean = np.zeros((nv, 2), dtype=bool)
    fallback: list = []
    _recover_component(xt, edges.x_values, vert_owner, values[:, 0],
                       fallback, clean[:, 0])
    _recover_component(yt, edges.y_values, vert_owner, values[:, 1],
                       fallback, clean[:, 1])
    is_hanging = np.zeros(nv, dtype=bool)
    if mesh.hanging:
        is_hanging[np.fromiter(mesh.hanging, dtype=np.int64)] = True
    fallback = [v for v in fallback if not is_hanging[v]]
    _recover_hanging(mesh, (xt, yt), (edges.x_values, edges.y_values),
                     is_hanging, clean, values, fallback)
    return RecoveredGradient(mesh, values, fallback)


def _recover_hanging(mesh, tabs, edge_vals, is_hanging, clean, values,
                     fallback):
    """Exact gradient values at hanging vertices.

    The sub-edge finite difference with the constrained hanging value equals
    the full coarse-edge difference, which is the exact tangential derivative
    at the edge midpoint (the hanging vertex itself) for biquadratics. The
    normal component is linear along the fine mesh line through the vertex,
    so it extrapolates exactly from the value already recovered at the first
    fine vertex and the next clean edge beyond it.
    """
    coords = mesh.vertices
    for v, (pa, pb) in mesh.hanging.items():
        t_ax = 0 if abs(coords[pa][0] - coords[pb][0]) > \
            abs(coords[pa][1] - coords[pb][1]) else 1
        n_ax = 1 - t_ax
        if is_hanging[pa] or is_hanging[pb]:
            # chained constraint: the sub-edge value is itself polluted
            wts = resolve_vertex_weights(mesh, v)
            values[v, 0] = sum(wt * values[pv, 0] for pv, wt in wts.items())
            values[v, 1] = sum(wt * values[pv, 1] for pv, wt in wts.items())
            fallback.append(v)
            continue

        tab_t = tabs[t_ax]
        e = tab_t["raw_minus"][v]
        if e < 0:
            e = tab_t["raw_plus"][v]
        values[v, t_ax] = edge_vals[t_ax][e]

        tab_n = tabs[n_ax]
        em = tab_n["raw_minus"][v]
        ep = tab_n["raw_plus"][v]
        if em >= 0:
            w = tab_n["raw_a"][em]
            cont = tab_n["minus"]
            sgn = -1.0
        else:
            w = tab_n["raw_b"][ep]
            cont = tab_n["plus"]
            sgn = 1.0
        sw = values[w, n_ax]
        if cont["has"][w] and cont["usable"][w] and not is_hanging[w] and \
                clean[w, n_ax]:
            m2 = coords[w][n_ax] + sgn * 0.5 * cont["ln"][w]
            v2 = edge_vals[n_ax][cont["e"][w]]
            slope = (sw - v2) / (coords[w][n_ax] - m2)
            values[v, n_ax] = sw + slope * (coords[v][n_ax] - coords[w][n_ax])
        else:
            # the fine line is blocked; the parent mean is second order
            values[v, n_ax] = 0.5 * (values[pa, n_ax] + values[pb, n_ax])
            fallback.append(v)


def recover_solution(u: NodalField, sigma: RecoveredGradient,
                     mesh: MeshView) -> RecoveredSolution:
    """Per-leaf biquadratic recovery: vertices copy the discrete solution,
    midpoints and centroid average path integrals of the recovered gradient
    (one-point midpoint rule per half-edge, exact for the linear integrand),
    and fine-side values on hanging faces follow the coarse polynomial."""
    uv = u.expanded()
    sv = sigma.values
    c2v = mesh.cell_to_vertex
    n = mesh.n_leaves
    hx = np.array([c.extent[0] for c in mesh.leaves])
    hy = np.array([c.extent[1] for c in mesh.leaves])

    w = np.empty((n, 9))
    uc = uv[c2v]                       # (n, 4)
    sx = sv[c2v, 0]
    sy = sv[c2v, 1]
    w[:, :4] = uc
    hang = np.zeros(mesh.n_vertices, dtype=bool)
    if mesh.hanging:
        hang[np.fromiter(mesh.hanging, dtype=np.int64)] = True
    hc = hang[c2v]                     # (n, 4)

    def midpoint(i0, i1, s, h):
        """Average of the two half-edge path integrals between corners i0
        and i1; a constrained corner value would pollute its integral, so a
        hanging corner defers to the integral from the opposite corner."""
        lo = uc[:, i0] + (0.75 * s[:, i0] + 0.25 * s[:, i1]) * h / 2
        hi = uc[:, i1] - (0.25 * s[:, i0] + 0.75 * s[:, i1]) * h / 2
        avg = 0.5 * (lo + hi)
        return np.where(hc[:, i0] & ~hc[:, i1], hi,
                        np.where(hc[:, i1] & ~hc[:, i0], lo, avg))

    w[:, 4] = midpoint(0, 2, sy, hy)   # left: integrate sigma_y
    w[:, 5] = midpoint(1, 3, sy, hy)   # right
    w[:, 6] = midpoint(0, 1, sx, hx)   # bottom: integrate sigma_x
    w[:, 7] = midpoint(2, 3, sx, hx)   # top

    # centroid: four path integrals starting from the recovered midpoints
    def bil(comp, s, t):
        return ((1 - s) * (1 - t) * comp[:, 0] + s * (1 - t) * comp[:, 1] +
                (1 - s) * t * comp[:, 2] + s * t * comp[:, 3])

    q1 = w[:, 4] + bil(sx, 0.25, 0.5) * hx / 2
    q2 = w[:, 5] - bil(sx, 0.75, 0.5) * hx / 2
    q3 = w[:, 6] + bil(sy, 0.5, 0.25) * hy / 2
    q4 = w[:, 7] - bil(sy, 0.5, 0.75) * hy / 2
    w[:, 8] = 0.25 * (q1 + q2 + q3 + q4)

    # The bilinear recovered gradient is blind to the bubble mode of a
    # biquadratic, so the centroid integrals miss hx^2 hy^2 u_xxyy / 64.
    # The cell-wise mixed differences of sigma sample u_xxy (u_xyy) at the
    # cell center ordinate (abscissa), both linear with slope u_xxyy, so a
    # least-squares fit restores the missing constant exactly.
    xc = np.array([c.anchor[0] for c in mesh.leaves]) + hx / 2
    yc = np.array([c.anchor[1] for c in mesh.leaves]) + hy / 2
    area = hx * hy
    u_xxy = (sx[:, 3] - sx[:, 2] - sx[:, 1] + sx[:, 0]) / area
    u_xyy = (sy[:, 3] - sy[:, 2] - sy[:, 1] + sy[:, 0]) / area
    slopes = []
    for t, f in ((yc, u_xxy), (xc, u_xyy)):
        dt = t - t.mean()
        var = dt @ dt
        if var > 1e-12 * (1.0 + t.mean() ** 2) * len(t):
            slopes.append((dt @ f) / var)
    if slopes:
        w[:, 8] += hx * hx * hy * hy * np.mean(slopes) / 64.0

    _apply_hanging_faces(mesh, w)
    return RecoveredSolution(mesh, w)


def _vertex_leaf_map(mesh: MeshView):
    if getattr(mesh, "_v2l", None) is None:
        v2l: dict = {}
        for i in range(mesh.n_leaves):
            for lo, v in enumerate(mesh.cell_to_vertex[i]):
                v2l.setdefault(int(v), []).append((i, lo))
        mesh._v2l = v2l
    return mesh._v2l


# local Q2 node indices on each cell side, ordered along the side:
# (corner, midpoint, corner)
_SIDE_NODES = {
    "left": (0, 4, 2),
    "right": (1, 5, 3),
    "bottom": (0, 6, 1),
    "top": (2, 7, 3),
}


def _apply_hanging_faces(mesh: MeshView, w: np.ndarray) -> None:
    v2l = _vertex_leaf_map(mesh)
    coords = mesh.vertices
    faces = []
    for hv, (pa, pb) in mesh.hanging.items():
        # coarse leaf: the one having both parents as corners of one edge
        la = {i for i, _ in v2l.get(int(pa), [])}
        lb = {i for i, _ in v2l.get(int(pb), [])}
        shared = la & lb
        if not shared:
            continue
        coarse = min(shared, key=lambda i: mesh.leaves[i].key[1])
        faces.append((mesh.leaves[coarse].key[1], hv, pa, pb, coarse))
    faces.sort()

    for _, hv, pa, pb, ci in faces:
        vertical = abs(coords[pa][0] - coords[pb][0]) < \
            abs(coords[pa][1] - coords[pb][1])
        cell = mesh.leaves[ci]
        cverts = mesh.cell_to_vertex[ci]
        if vertical:
            side = "left" if {int(cverts[0]), int(cverts[2])} == \
                {int(pa), int(pb)} else "right"
        else:
            side = "bottom" if {int(cverts[0]), int(cverts[1])} == \
                {int(pa), int(pb)} else "top"
        n0, nm, n1 = _SIDE_NODES[side]
        # coarse-edge quadratic from pa (s=0) to pb (s=1)
        lo_is_pa = int(cverts[n0]) == int(pa)
        if lo_is_pa:
            qnodes = np.array([w[ci, n0], w[ci, nm], w[ci, n1]])
        else:
            qnodes = np.array([w[ci, n1], w[ci, nm], w[ci, n0]])

        def q(s):
            l = kernels._q2_1d(s)
            return l @ qnodes

        axis = 1 if vertical else 0
        s_a = coords[pa][axis]
        s_b = coords[pb][axis]
        for fi, lo in v2l[int(hv)]:
            if fi == ci:
                continue
            fcell = mesh.leaves[fi]
            fverts = mesh.cell_to_vertex[fi]
            # fine side on the face: the fine cell's side whose two corners
            # both lie on the pa-pb segment line
            if vertical:
                fside = "left" if abs(fcell.anchor[0] - coords[pa][0]) < \
                    1e-12 * fcell.extent[0] else "right"
            else:
                fside = "bottom" if abs(fcell.anchor[1] - coords[pa][1]) < \
                    1e-12 * fcell.extent[1] else "top"
            f0, fm, f1 = _SIDE_NODES[fside]
            for node, vtx in ((f0, fverts[f0]), (f1, fverts[f1])):
                s = (coords[vtx][axis] - s_a) / (s_b - s_a)
                w[fi, node] = q(s)
            # fine midpoint: halfway between the fine side's corners
            s_lo = (coords[fverts[f0]][axis] - s_a) / (s_b - s_a)
            s_hi = (coords[fverts[f1]][axis] - s_a) / (s_b - s_a)
            w[fi, fm] = q(0.5 * (s_lo + s_hi))


def evaluate_recovered(w: RecoveredSolution, cell, point) -> float:
    """Biquadratic evaluation of the 9 nodal values inside ``cell``."""
    x0, y0 = cell.anchor
    hxc, hyc = cell.extent
    s = (point[0] - x0) / hxc
    t = (point[1] - y0) / hyc
    tol = 1e-12
    if not (-tol <= s <= 1 + tol and -tol <= t <= 1 + tol):
        raise ValueError(f"point {point} outside cell")
    mesh = w.mesh
    if not hasattr(mesh, "_leaf_lookup"):
        mesh._leaf_lookup = {c.key: i for i, c in enumerate(mesh.leaves)}
    i = mesh._leaf_lookup[cell.key]
    return kernels.q2_eval(w.node_values[i], s, t)
