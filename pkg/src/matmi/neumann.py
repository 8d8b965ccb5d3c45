"""P1 finite element solver for the Neumann conductivity problem.

The Maxwell system is reduced to the elliptic problem

    div(A(x, gamma) grad u) = -div(A(x, gamma) Etilde)   in Omega,
    (A grad u + A Etilde) . nu = 0                        on the boundary,

with Etilde = 0.5 * (-y, x, 0), and the electric field is recovered as
E = Etilde + grad u (per cell, exact P1 gradient).
"""

import numpy as np
import scipy.sparse as sp

from .fields import CellField, NodalField, mass_matrix

__all__ = [
    "SparseSystem",
    "SolverError",
    "etilde",
    "assemble",
    "assemble_stiffness",
    "load_vector",
    "solve_mean_zero",
    "electric_field",
    "solve_field",
    "export_matrix_market",
]


class SolverError(RuntimeError):
    """Iterative solver failure; carries the residual history."""

    def __init__(self, message, residuals):
        super().__init__(message)
        self.residuals = residuals


class SparseSystem:
    """Symmetric sparse stiffness matrix plus right-hand side."""

    def __init__(self, matrix, rhs):
        self.matrix = matrix
        self.rhs = rhs


def etilde(x):
    """Reference field 0.5 * (-y, x, 0); accepts one point or (N, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    out = np.zeros((pts.shape[0], 3))
    out[:, 0] = -0.5 * pts[:, 1]
    out[:, 1] = 0.5 * pts[:, 0]
    return out[0] if single else out


def _gamma_cell_values(mesh, family, gamma):
    """Centroid parameter values, with range checking on the raw dofs."""
    lo, hi = family.t_range
    eps = 1e-12 * max(1.0, abs(lo), abs(hi))
    if isinstance(gamma, NodalField):
        bad = np.where((gamma.values < lo - eps) | (gamma.values > hi + eps))[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                "gamma value %g at vertex %d outside admissible range "
                "[%g, %g]" % (gamma.values[i], i, lo, hi))
        return gamma.cell_means()
    bad = np.where((gamma.values < lo - eps) | (gamma.values > hi + eps))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            "gamma value %g at cell %d outside admissible range [%g, %g]"
            % (gamma.values[i], i, lo, hi))
    return gamma.values


def conductivity_blocks(mesh, family, gamma):
    """In-plane conductivity matrix per cell, shape (nc, dim, dim).

    Evaluates A at cell centroids (one-point quadrature) and keeps the
    upper-left dim x dim block; this is exact for the in-plane action of
    every builtin family because A couples the z-axis only diagonally.
    """
    gc = _gamma_cell_values(mesh, family, gamma)
    xs = np.zeros((mesh.num_cells, 3))
    xs[:, :mesh.dim] = mesh.cell_centroids
    A = family.eval_many(xs, gc, check_range=False)
    return A[:, :mesh.dim, :mesh.dim]


def assemble_stiffness(mesh, family, gamma):
    """Stiffness matrix K_ij = int A(x, gamma) grad phi_j . grad phi_i dx."""
    B = conductivity_blocks(mesh, family, gamma)
    g = mesh.cell_grads                       # (nc, nloc, dim)
    vol = mesh.cell_volumes
    ke = np.einsum("c,cid,cde,cje->cij", vol, g, B, g)
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)),
                      shape=(mesh.num_vertices, mesh.num_vertices))
    return K.tocsr()


def assemble(mesh, family, gamma):
    """Neumann system for the field potential u (pure Neumann, singular).

    rhs_i = -int A(x, gamma) Etilde . grad phi_i dx, evaluated with the
    same centroid quadrature as the stiffness matrix.
    """
    K = assemble_stiffness(mesh, family, gamma)
    B = conductivity_blocks(mesh, family, gamma)
    et = etilde(mesh.cell_centroids)[:, :mesh.dim]
    q = np.einsum("cde,ce->cd", B, et)        # A Etilde per cell, in-plane
    contrib = -np.einsum("c,cid,cd->ci", mesh.cell_volumes,
                         mesh.cell_grads, q)
    b = np.zeros(mesh.num_vertices)
    np.add.at(b, mesh.cells.ravel(), contrib.ravel())
    return SparseSystem(K, b)


def load_vector(mesh, f):
    """Load vector int f phi_i dx via an edge-midpoint quadrature (2D,
    exact for quadratics) or the vertex rule (3D)."""
    nloc = mesh.dim + 1
    b = np.zeros(mesh.num_vertices)
    x = mesh.vertices[mesh.cells]             # (nc, nloc, dim)
    vol = mesh.cell_volumes
    if mesh.dim == 2:
        # midpoints of edges (i, j); phi_k = 1/2 on its two adjacent edges
        pairs = [(0, 1), (1, 2), (0, 2)]
        for (i, j) in pairs:
            mid = 0.5 * (x[:, i, :] + x[:, j, :])
            fv = np.asarray(f(mid), dtype=float)
            w = vol / 3.0
            np.add.at(b, mesh.cells[:, i], 0.5 * w * fv)
            np.add.at(b, mesh.cells[:, j], 0.5 * w * fv)
    else:
        for i in range(nloc):
            fv = np.asarray(f(x[:, i, :]), dtype=float)
            np.add.at(b, mesh.cells[:, i], vol / nloc * fv)
    return b


def solve_mean_zero(system, tol=1e-10, max_iter=None, jacobi=False):
    """Conjugate gradients on the singular Neumann system.

    The constant null-space mode is projected out of the residual at
    every iteration; the returned vector has zero Euclidean mean over the
    vertices.  Raises SolverError (with the residual history) on
    non-convergence.
    """
    K = system.matrix
    n = K.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    e = np.ones(n) / np.sqrt(n)

    def deflate(v):
        return v - (e @ v) * e

    b = deflate(system.rhs.astype(float))
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), [0.0]

    if jacobi:
        dinv = 1.0 / K.diagonal()

        def precond(r):
            return deflate(dinv * r)
    else:
        def precond(r):
            return r

    x = np.zeros(n)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = r @ z
    history = [1.0]
    for _ in range(max_iter):
        Kp = deflate(K @ p)
        alpha = rz / (p @ Kp)
        x += alpha * p
        r -= alpha * Kp
        r = deflate(r)
        rel = np.linalg.norm(r) / bnorm
        history.append(rel)
        if rel <= tol:
            return deflate(x), history
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        "CG did not reach tol=%g in %d iterations (residual %.3g)"
        % (tol, max_iter, history[-1]), history)


def electric_field(mesh, u):
    """Per-cell electric field E = grad u + Etilde(centroid), shape (nc, 3)."""
    E = etilde(mesh.cell_centroids)
    E[:, :mesh.dim] += u.cell_gradients()
    return CellField(mesh, E)


def solve_field(mesh, family, gamma, tol=1e-10, max_iter=None, jacobi=False,
                M=None):
    """Assemble and solve the Neumann problem; return (u, E).

    The potential u is normalized to zero L2 mean using the mass matrix
    (pass a prebuilt one in M to avoid reassembly).
    """
    system = assemble(mesh, family, gamma)
    vals, _ = solve_mean_zero(system, tol=tol, max_iter=max_iter,
                              jacobi=jacobi)
    if M is None:
        M = mass_matrix(mesh)
    vol = mesh.cell_volumes.sum()
    vals = vals - (M @ vals).sum() / vol
    u = NodalField(mesh, vals)
    return u, electric_field(mesh, u)


def export_matrix_market(system, prefix):
    """Dump K and b in Matrix Market coordinate/array format."""
    from scipy.io import mmwrite
    mmwrite(prefix + "_K.mtx", system.matrix.tocoo())
    mmwrite(prefix + "_b.mtx", system.rhs.reshape(-1, 1))
