"""P1 nodal fields, per-cell fields, and L2 norms on simplicial meshes."""

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NodalField",
    "CellField",
    "mass_matrix",
    "l2_norm_nodal",
    "l2_norm_cell",
    "nodal_to_cell",
    "cell_to_nodal",
    "interpolate_nodal",
    "level_set_centroid",
]


class NodalField:
    """Scalar P1 field: one value per mesh vertex."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_vertices,):
            raise ValueError("expected %d nodal values, got shape %s"
                             % (mesh.num_vertices, values.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError("nodal field contains non-finite values")
        self.mesh = mesh
        self.values = values

    def copy(self):
        return NodalField(self.mesh, self.values.copy())

    def cell_means(self):
        """Value at cell centroids (mean of the cell's vertex values)."""
        return self.values[self.mesh.cells].mean(axis=1)

    def cell_gradients(self):
        """Exact per-cell P1 gradient, shape (nc, dim)."""
        vals = self.values[self.mesh.cells]            # (nc, dim+1)
        return np.einsum("ci,cid->cd", vals, self.mesh.cell_grads)


class CellField:
    """Piecewise-constant field: one scalar or one vector per cell."""

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != mesh.num_cells:
            raise ValueError("expected %d cell values, got shape %s"
                             % (mesh.num_cells, values.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError("cell field contains non-finite values")
        self.mesh = mesh
        self.values = values

    def copy(self):
        return CellField(self.mesh, self.values.copy())


def mass_matrix(mesh):
    """Consistent P1 mass matrix (CSR)."""
    nloc = mesh.dim + 1
    # local P1 mass on a simplex: vol/((d+1)(d+2)) * (1 + delta_ij)
    local = (np.ones((nloc, nloc)) + np.eye(nloc)) / ((nloc) * (nloc + 1))
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    vals = (mesh.cell_volumes[:, None, None] * local[None, :, :]).ravel()
    M = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.num_vertices, mesh.num_vertices))
    return M.tocsr()


def l2_norm_nodal(mesh, values, M=None):
    """L2(Omega) norm of a P1 field given by vertex values."""
    if M is None:
        M = mass_matrix(mesh)
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def l2_norm_cell(mesh, values):
    """L2(Omega) norm of a piecewise-constant field (scalar or vector)."""
    v = np.asarray(values, dtype=float)
    sq = v * v if v.ndim == 1 else (v * v).sum(axis=1)
    return float(np.sqrt(np.dot(mesh.cell_volumes, sq)))


def nodal_to_cell(field):
    """Centroid values of a NodalField as a scalar CellField."""
    return CellField(field.mesh, field.cell_means())


def cell_to_nodal(field):
    """Volume-weighted average of adjacent cell values at each vertex.

    Works for scalar or vector CellFields; returns raw vertex values
    (shape (nv,) or (nv, k)).
    """
    mesh = field.mesh
    vals = field.values
    nloc = mesh.dim + 1
    w = np.repeat(mesh.cell_volumes, nloc)
    idx = mesh.cells.ravel()
    denom = np.zeros(mesh.num_vertices)
    np.add.at(denom, idx, w)
    if vals.ndim == 1:
        num = np.zeros(mesh.num_vertices)
        np.add.at(num, idx, np.repeat(vals, nloc) * w)
        return num / denom
    out = np.zeros((mesh.num_vertices, vals.shape[1]))
    for k in range(vals.shape[1]):
        np.add.at(out[:, k], idx, np.repeat(vals[:, k], nloc) * w)
    return out / denom[:, None]


def level_set_centroid(field, level):
    """Volume-weighted centroid of the region where the P1 field's
    cell means reach `level`; nan vector if the region is empty."""
    mesh = field.mesh
    means = field.cell_means()
    mask = means >= level
    if not mask.any():
        return np.full(mesh.dim, float("nan"))
    vols = mesh.cell_volumes[mask]
    return (vols[:, None] * mesh.cell_centroids[mask]).sum(axis=0) / vols.sum()


def interpolate_nodal(mesh, func):
    """NodalField from a function of the coordinates.

    `func` receives an (nv, dim) array and returns (nv,) values, or is
    applied pointwise if that fails.
    """
    x = mesh.vertices
    try:
        vals = np.asarray(func(x), dtype=float)
        if vals.shape != (mesh.num_vertices,):
            raise ValueError
    except Exception:
        vals = np.array([func(p) for p in x], dtype=float)
    return NodalField(mesh, vals)
