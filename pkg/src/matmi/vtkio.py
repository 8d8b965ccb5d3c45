"""Legacy ASCII VTK output for triangle and tetrahedron meshes."""

import numpy as np

__all__ = ["write_vtk", "write_slice_csv"]

_CELL_TYPE = {2: 5, 3: 10}        # VTK_TRIANGLE, VTK_TETRA


def write_vtk(path, mesh, point_data=None, cell_data=None, title="matmi"):
    """Write an unstructured-grid VTK file.

    point_data / cell_data: dicts mapping a name to a scalar array of
    vertex / cell values.  Numbers are written with %.17g so repeated
    runs produce byte-identical files.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    nloc = mesh.dim + 1
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n%s\nASCII\n" % title)
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write("POINTS %d double\n" % mesh.num_vertices)
        for p in mesh.vertices:
            coords = list(p) + [0.0] * (3 - mesh.dim)
            fh.write("%.17g %.17g %.17g\n" % tuple(coords))
        fh.write("CELLS %d %d\n" % (mesh.num_cells,
                                    mesh.num_cells * (nloc + 1)))
        for cell in mesh.cells:
            fh.write("%d %s\n" % (nloc, " ".join(str(int(v)) for v in cell)))
        fh.write("CELL_TYPES %d\n" % mesh.num_cells)
        fh.write(("%d\n" % _CELL_TYPE[mesh.dim]) * mesh.num_cells)
        if point_data:
            fh.write("POINT_DATA %d\n" % mesh.num_vertices)
            for name, vals in point_data.items():
                _write_scalars(fh, name, vals)
        if cell_data:
            fh.write("CELL_DATA %d\n" % mesh.num_cells)
            for name, vals in cell_data.items():
                _write_scalars(fh, name, vals)


def _write_scalars(fh, name, vals):
    fh.write("SCALARS %s double 1\nLOOKUP_TABLE default\n" % name)
    for v in np.asarray(vals, dtype=float):
        fh.write("%.17g\n" % v)


def write_slice_csv(field, z, path, samples=None):
    """Sample a 3D nodal field on the plane of constant z and write a
    CSV with columns x, y, value on a regular (n+1)^2 grid."""
    from .functional import eval_p1
    mesh = field.mesh
    if mesh.dim != 3:
        raise ValueError("slice export requires a 3D mesh")
    n = samples if samples is not None else mesh.n
    ticks = np.linspace(0.0, 1.0, n + 1)
    xs, ys = np.meshgrid(ticks, ticks, indexing="ij")
    pts = np.column_stack([xs.ravel(), ys.ravel(),
                           np.full(xs.size, float(z))])
    vals = eval_p1(field, pts)
    with open(path, "w", newline="") as fh:
        fh.write("x,y,value\n")
        for p, v in zip(pts, vals):
            fh.write("%.17g,%.17g,%.17g\n" % (p[0], p[1], v))
