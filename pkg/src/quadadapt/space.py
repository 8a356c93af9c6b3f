"""Constrained piecewise-bilinear space on a non-conforming quadtree mesh.

Hanging vertices are not degrees of freedom: each one is constrained to the
arithmetic mean of its two parent vertices. Constraints may chain (a parent
can itself hang on a coarser face); expansion resolves chains recursively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forest import MeshView

__all__ = ["DofMap", "NodalField", "build_dofmap", "interpolate",
           "evaluate", "transfer", "expand", "constraint_matrix"]


@dataclass
class DofMap:
    mesh: MeshView
    n_dofs: int
    vertex_to_dof: np.ndarray        # -1 for hanging vertices
    dof_to_vertex: np.ndarray
    constraints: list                # (hanging vertex, parent_a, parent_b)
    dirichlet: dict                  # dof -> boundary value

    def dof_coords(self) -> np.ndarray:
        return self.mesh.vertices[self.dof_to_vertex]

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        for d in self.dirichlet:
            mask[d] = False
        return np.nonzero(mask)[0]


@dataclass
class NodalField:
    dofmap: DofMap
    values: np.ndarray               # one value per dof

    def expanded(self) -> np.ndarray:
        return expand(self.dofmap, self.values)


def resolve_vertex_weights(mesh: MeshView, vertex: int) -> dict:
    """Weights of true dof vertices defining the value at ``vertex``."""
    if vertex not in mesh.hanging:
        return {vertex: 1.0}
    a, b = mesh.hanging[vertex]
    out = {}
    for p in (a, b):
        for v, w in resolve_vertex_weights(mesh, p).items():
            out[v] = out.get(v, 0.0) + 0.5 * w
    return out


def constraint_matrix(dofmap: DofMap):
    """Sparse expansion C mapping dof values to all vertex values."""
    import scipy.sparse as sp

    mesh = dofmap.mesh
    rows, cols, vals = [], [], []
    for v in range(mesh.n_vertices):
        for vp, w in resolve_vertex_weights(mesh, v).items():
            rows.append(v)
            cols.append(dofmap.vertex_to_dof[vp])
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(mesh.n_vertices, dofmap.n_dofs))


def expand(dofmap: DofMap, values: np.ndarray) -> np.ndarray:
    """Vertex-length array: dof values plus constrained hanging values."""
    mesh = dofmap.mesh
    out = np.empty((mesh.n_vertices,) + values.shape[1:])
    out[dofmap.dof_to_vertex] = values
    # hanging values in chain-safe order: resolve recursively
    for v in mesh.hanging:
        out[v] = sum(w * values[dofmap.vertex_to_dof[p]]
                     for p, w in resolve_vertex_weights(mesh, v).items())
    return out


def build_dofmap(mesh: MeshView, dirichlet_predicate=None, dirichlet_data=None) -> DofMap:
    """Number the non-hanging vertices and tag Dirichlet dofs.

    ``dirichlet_predicate(x, y)`` selects boundary vertices;
    ``dirichlet_data(x, y)`` supplies their values.
    """
    n_vert = mesh.n_vertices
    vertex_to_dof = np.full(n_vert, -1, dtype=np.int64)
    dof_to_vertex = []
    for v in range(n_vert):
        if v not in mesh.hanging:
            vertex_to_dof[v] = len(dof_to_vertex)
            dof_to_vertex.append(v)
    dof_to_vertex = np.asarray(dof_to_vertex, dtype=np.int64)

    dirichlet = {}
    if dirichlet_predicate is not None:
        for d, v in enumerate(dof_to_vertex):
            if not mesh.boundary[v]:
                continue
            x, y = mesh.vertices[v]
            if dirichlet_predicate(x, y):
                dirichlet[d] = float(dirichlet_data(x, y))
        for v in mesh.hanging:
            x, y = mesh.vertices[v]
            if mesh.boundary[v] and dirichlet_predicate(x, y):
                raise AssertionError(
                    "hanging vertex on the Dirichlet boundary; brick faces "
                    "should never produce half-faces on the boundary")

    constraints = [(v, a, b) for v, (a, b) in mesh.hanging.items()]
    return DofMap(mesh=mesh, n_dofs=len(dof_to_vertex),
                  vertex_to_dof=vertex_to_dof, dof_to_vertex=dof_to_vertex,
                  constraints=constraints, dirichlet=dirichlet)


def interpolate(f, dofmap: DofMap) -> NodalField:
    """Nodal interpolant: values[i] = f(x_i, y_i) at each dof vertex."""
    xy = dofmap.dof_coords()
    vals = np.asarray([f(x, y) for x, y in xy], dtype=float)
    return NodalField(dofmap, vals)


def _local_coords(cell, point):
    x0, y0 = cell.anchor
    hx, hy = cell.extent
    s = (point[0] - x0) / hx
    t = (point[1] - y0) / hy
    return s, t


def evaluate(u: NodalField, cell, point) -> float:
    """Bilinear evaluation inside ``cell``; hanging corners use constrained
    values."""
    s, t = _local_coords(cell, point)
    tol = 1e-12
    if not (-tol <= s <= 1 + tol and -tol <= t <= 1 + tol):
        raise ValueError(f"point {point} outside cell")
    mesh = u.dofmap.mesh
    leaf_index = _leaf_index(mesh, cell)
    vexp = u.expanded()
    c = vexp[mesh.cell_to_vertex[leaf_index]]
    return ((1 - s) * (1 - t) * c[0] + s * (1 - t) * c[1] +
            (1 - s) * t * c[2] + s * t * c[3])


def _leaf_index(mesh: MeshView, cell):
    if not hasattr(mesh, "_leaf_lookup"):
        mesh._leaf_lookup = {c.key: i for i, c in enumerate(mesh.leaves)}
    return mesh._leaf_lookup[cell.key]


def evaluate_many(u_vertex: np.ndarray, mesh: MeshView, leaf_index: int,
                  pts: np.ndarray) -> np.ndarray:
    """Vectorized bilinear evaluation of vertex-expanded values at points
    inside one leaf."""
    cell = mesh.leaves[leaf_index]
    x0, y0 = cell.anchor
    hx, hy = cell.extent
    s = (pts[:, 0] - x0) / hx
    t = (pts[:, 1] - y0) / hy
    c = u_vertex[mesh.cell_to_vertex[leaf_index]]
    return ((1 - s) * (1 - t) * c[0] + s * (1 - t) * c[1] +
            (1 - s) * t * c[2] + s * t * c[3])


def _containing_leaf(mesh: MeshView, x, y):
    """Leaf index containing (x, y), via ancestor probing on the leaf keys."""
    from .forest import morton_encode

    if not hasattr(mesh, "_key_index"):
        mesh._key_index = {c.key: i for i, c in enumerate(mesh.leaves)}
        mesh._max_level = max(c.key[1] for c in mesh.leaves)
        # brick counts recovered from the root extents of tree 0
        x0, y0, x1, y1 = mesh.domain
        c0 = next(c for c in mesh.leaves if c.key[0] == 0)
        hx_root = c0.extent[0] * (1 << c0.key[1])
        hy_root = c0.extent[1] * (1 << c0.key[1])
        mesh._brick = (round((x1 - x0) / hx_root), round((y1 - y0) / hy_root))

    x0, y0, x1, y1 = mesh.domain
    mx, my = mesh._brick
    L = mesh._max_level
    n = 1 << L
    fx = (x - x0) / (x1 - x0) * mx
    fy = (y - y0) / (y1 - y0) * my
    tx = min(max(int(fx), 0), mx - 1)
    ty = min(max(int(fy), 0), my - 1)
    ix = min(max(int((fx - tx) * n), 0), n - 1)
    iy = min(max(int((fy - ty) * n), 0), n - 1)
    tree = ty * mx + tx
    m = morton_encode(ix, iy)
    for lev in range(L, -1, -1):
        i = mesh._key_index.get((tree, lev, m >> (2 * (L - lev))))
        if i is not None:
            return i
    raise ValueError(f"point ({x}, {y}) outside mesh")


def transfer(u: NodalField, new_dofmap: DofMap) -> NodalField:
    """Sample ``u`` on the dof vertices of a new mesh over the same domain.

    Exact when the new mesh refines the old one.
    """
    old_mesh = u.dofmap.mesh
    if tuple(old_mesh.domain) != tuple(new_dofmap.mesh.domain):
        raise ValueError("meshes cover different domains")
    vexp = u.expanded()
    vals = np.empty(new_dofmap.n_dofs)
    for d, v in enumerate(new_dofmap.dof_to_vertex):
        x, y = new_dofmap.mesh.vertices[v]
        i = _containing_leaf(old_mesh, x, y)
        vals[d] = evaluate_many(vexp, old_mesh, i,
                                np.array([[x, y]]))[0]
    return NodalField(new_dofmap, vals)
