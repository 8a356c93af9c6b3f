"""Legacy ASCII VTK output and CSV field export.

Meshes are written as unstructured grids of quads (cell type 9) with
optional cell data (estimator, level, owner) and point data (solution
values, including constrained hanging values).
"""

from __future__ import annotations

import numpy as np

from .forest import MeshView

__all__ = ["write_vtk", "write_field_csv"]


def write_vtk(path, mesh: MeshView, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "quadadapt") -> None:
    """Write the mesh with named point and cell data arrays.

    ``point_data`` maps name -> (n_vertices,) array; ``cell_data`` maps
    name -> (n_leaves,) array.
    """
    nv = mesh.n_vertices
    nc = mesh.n_leaves
    # VTK_QUAD expects counterclockwise corners; local order is
    # lexicographic, so swap the top pair
    conn = mesh.cell_to_vertex[:, [0, 1, 3, 2]]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r} 0.0\n")
        fh.write(f"CELLS {nc} {5 * nc}\n")
        for row in conn:
            fh.write(f"4 {row[0]} {row[1]} {row[2]} {row[3]}\n")
        fh.write(f"CELL_TYPES {nc}\n")
        for _ in range(nc):
            fh.write("9\n")
        if cell_data:
            fh.write(f"CELL_DATA {nc}\n")
            for name, arr in cell_data.items():
                arr = np.asarray(arr)
                kind = "int" if np.issubdtype(arr.dtype, np.integer) \
                    else "double"
                fh.write(f"SCALARS {name} {kind} 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in arr:
                    fh.write(f"{float(v)!r}\n" if kind == "double"
                             else f"{int(v)}\n")
        if point_data:
            fh.write(f"POINT_DATA {nv}\n")
            for name, arr in point_data.items():
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in np.asarray(arr, dtype=float):
                    fh.write(f"{float(v)!r}\n")


def write_field_csv(path, mesh: MeshView, values: np.ndarray,
                    name: str = "u") -> None:
    """Vertex-sampled field as x,y,value rows (hanging vertices included)."""
    with open(path, "w") as fh:
        fh.write(f"x,y,{name}\n")
        for (x, y), v in zip(mesh.vertices, values):
            fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")
