"""The forward data map: gamma -> F(gamma) = div(A(x, gamma) (E x B0)).

F is kept in weak form.  Two test spaces are served, matching the two
transport discretizations: P1 (continuous) and DG0 (cell indicators).
The DG0 functional uses the upwind face trace of the flux so that data
generated on the inversion mesh is exactly consistent with the upwinded
transport operator.
"""

import csv
import hashlib
import io
import struct

import numpy as np
import scipy.sparse.linalg as spla

from .fields import CellField, NodalField, mass_matrix
from .mesh import build_unit_cube, build_unit_square
from .neumann import solve_field

__all__ = [
    "FunctionalData",
    "cross_b0",
    "flux_field",
    "weak_p1_from_flux",
    "weak_dg0_from_flux",
    "weak_p1_from_nodal",
    "weak_dg0_from_nodal",
    "synthesize",
    "eval_p1",
    "save_functional_data",
    "load_functional_data",
    "write_nodal_csv",
]

_MAGIC = b"MATMIFN1"


def cross_b0(E):
    """E x B0 with B0 = (0, 0, 1): maps (E1, E2, E3) to (E2, -E1, 0)."""
    E = np.asarray(E, dtype=float)
    single = E.ndim == 1
    v = np.atleast_2d(E)
    out = np.zeros_like(v)
    out[:, 0] = v[:, 1]
    out[:, 1] = -v[:, 0]
    return out[0] if single else out


class FunctionalData:
    """Weak-form acoustic source data on a mesh.

    Attributes
    ----------
    mesh : Mesh
    p1_weak : (nv,) array
        v -> int F v dx tested against the P1 nodal basis.
    dg0_weak : (nc,) array
        Same functional tested against cell indicator functions.
    nodal_projection : NodalField
        L2 projection of F onto P1 (mass-matrix solve of p1_weak).
    flux : CellField or None
        The per-cell flux q = A(gamma)(E x B0) when data was generated on
        this mesh; None when restricted from a finer mesh.
    source_mesh_resolution : int
        Resolution of the mesh the data was generated on.
    """

    def __init__(self, mesh, p1_weak, dg0_weak, nodal_projection, flux,
                 source_mesh_resolution):
        self.mesh = mesh
        self.p1_weak = p1_weak
        self.dg0_weak = dg0_weak
        self.nodal_projection = nodal_projection
        self.flux = flux
        self.source_mesh_resolution = int(source_mesh_resolution)

    def boundary_flux_total(self):
        """Total weak integral of F (equals the boundary flux integral)."""
        return float(self.p1_weak.sum())


def flux_field(mesh, family, gamma_cell_values, E):
    """Per-cell flux q = A(x, gamma) (E x B0), in-plane components.

    gamma_cell_values: (nc,) parameter values at cell centroids.
    E: CellField (nc, 3).
    """
    xs = np.zeros((mesh.num_cells, 3))
    xs[:, :mesh.dim] = mesh.cell_centroids
    A = family.eval_many(xs, gamma_cell_values, check_range=False)
    w = cross_b0(E.values)                    # (nc, 3)
    q = np.einsum("cij,cj->ci", A, w)
    return q[:, :mesh.dim]


def weak_p1_from_flux(mesh, q):
    """P1-weak divergence of a per-cell flux:
    r_i = -int q . grad phi_i dx + bdry int (q . nu) phi_i ds."""
    contrib = -np.einsum("c,cid,cd->ci", mesh.cell_volumes,
                         mesh.cell_grads, q)
    r = np.zeros(mesh.num_vertices)
    np.add.at(r, mesh.cells.ravel(), contrib.ravel())
    share = 1.0 / mesh.dim                    # int_f phi_i ds = |f|/dim
    for f in mesh.boundary_facets:
        qn = float(np.dot(q[f.cell], f.normal))
        r[f.vertices] += qn * f.measure * share
    return r


def weak_dg0_from_flux(mesh, q, w):
    """DG0-weak divergence with upwind face traces.

    On each internal face the flux trace is taken from the upwind cell
    with respect to the face-averaged advective velocity w (per-cell,
    in-plane); boundary facets use the adjacent cell's flux.
    """
    r = np.zeros(mesh.num_cells)
    L, R = mesh.face_left, mesh.face_right
    wf = 0.5 * (w[L] + w[R])
    vn = np.einsum("fd,fd->f", wf, mesh.face_normals)
    q_up = np.where((vn >= 0.0)[:, None], q[L], q[R])
    qn = np.einsum("fd,fd->f", q_up, mesh.face_normals) * mesh.face_measures
    np.add.at(r, L, qn)
    np.add.at(r, R, -qn)
    for f in mesh.boundary_facets:
        r[f.cell] += float(np.dot(q[f.cell], f.normal)) * f.measure
    return r


def weak_p1_from_nodal(mesh, F, M=None):
    """P1-weak vector of a pointwise P1 source field F."""
    if M is None:
        M = mass_matrix(mesh)
    return M @ F.values


def weak_dg0_from_nodal(mesh, F):
    """Cell integrals of a P1 source field."""
    return mesh.cell_volumes * F.cell_means()


def eval_p1(field, points):
    """Evaluate a NodalField on a structured mesh at arbitrary points."""
    mesh = field.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = mesh.n
    out = np.empty(pts.shape[0])
    cells_per_box = 2 if mesh.dim == 2 else 6
    for k, p in enumerate(pts):
        idx = np.minimum((p * n).astype(int), n - 1)
        if mesh.dim == 2:
            box = (idx[0] * n + idx[1]) * 2
        else:
            box = ((idx[0] * n + idx[1]) * n + idx[2]) * 6
        val = None
        for c in range(box, box + cells_per_box):
            x = mesh.vertices[mesh.cells[c]]
            T = (x[1:] - x[0]).T
            lam = np.linalg.solve(T, p - x[0])
            bary = np.concatenate([[1.0 - lam.sum()], lam])
            if np.all(bary >= -1e-10):
                val = float(bary @ field.values[mesh.cells[c]])
                break
        if val is None:
            raise ValueError("point %s not located in mesh" % (p,))
        out[k] = val
    return out


def synthesize(family, gamma_star, mesh, refine=1, solver_tol=1e-10,
               jacobi=False, M=None):
    """Generate the weak acoustic-source data F(gamma_star) on `mesh`.

    gamma_star may be a NodalField on `mesh` or a callable of the vertex
    coordinates.  With refine > 1 the Neumann solve runs on a
    refine-times finer mesh and the nodal projection of F is restricted
    to `mesh` by P1 interpolation at the coarse vertices, avoiding the
    inverse crime.
    """
    if refine < 1:
        raise ValueError("refine must be >= 1")
    if M is None:
        M = mass_matrix(mesh)

    if refine == 1:
        data_mesh = mesh
        if callable(gamma_star):
            from .fields import interpolate_nodal
            gamma = interpolate_nodal(mesh, gamma_star)
        else:
            gamma = gamma_star
        u, E = solve_field(data_mesh, family, gamma, tol=solver_tol,
                           jacobi=jacobi, M=M)
        gc = gamma.cell_means() if isinstance(gamma, NodalField) \
            else gamma.values
        q = flux_field(data_mesh, family, gc, E)
        w = cross_b0(E.values)[:, :mesh.dim]
        p1 = weak_p1_from_flux(data_mesh, q)
        dg0 = weak_dg0_from_flux(data_mesh, q, w)
        proj = NodalField(mesh, spla.spsolve(M.tocsc(), p1))
        return FunctionalData(mesh, p1, dg0, proj, CellField(mesh, q), mesh.n)

    builder = build_unit_square if mesh.dim == 2 else build_unit_cube
    fine = builder(mesh.n * refine)
    if callable(gamma_star):
        from .fields import interpolate_nodal
        gamma_f = interpolate_nodal(fine, gamma_star)
    else:
        gamma_f = NodalField(fine, eval_p1(gamma_star, fine.vertices))
    u, E = solve_field(fine, family, gamma_f, tol=solver_tol, jacobi=jacobi)
    q = flux_field(fine, family, gamma_f.cell_means(), E)
    p1_f = weak_p1_from_flux(fine, q)
    Mf = mass_matrix(fine)
    proj_f = NodalField(fine, spla.spsolve(Mf.tocsc(), p1_f))
    F_coarse = NodalField(mesh, eval_p1(proj_f, mesh.vertices))
    p1 = weak_p1_from_nodal(mesh, F_coarse, M)
    dg0 = weak_dg0_from_nodal(mesh, F_coarse)
    return FunctionalData(mesh, p1, dg0, F_coarse, None, fine.n)


# -- serialization ------------------------------------------------------

def save_functional_data(data, path):
    """Flat little-endian binary container for FunctionalData.

    The header stores the mesh content hash and a SHA-256 of the payload
    so both loading onto the wrong mesh and file corruption are caught.
    """
    mesh = data.mesh
    chunks = [struct.pack("<iii", mesh.dim, mesh.n,
                          data.source_mesh_resolution)]
    for vec in (data.p1_weak, data.dg0_weak,
                data.nodal_projection.values):
        arr = np.asarray(vec, dtype="<f8")
        chunks.append(struct.pack("<q", arr.size))
        chunks.append(arr.tobytes())
    if data.flux is not None:
        arr = np.ascontiguousarray(data.flux.values, dtype="<f8")
        chunks.append(struct.pack("<q", arr.size))
        chunks.append(arr.tobytes())
    else:
        chunks.append(struct.pack("<q", 0))
    payload = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(mesh.content_hash().encode("ascii"))
        fh.write(hashlib.sha256(payload).hexdigest().encode("ascii"))
        fh.write(payload)


def load_functional_data(mesh, path):
    """Read a container written by save_functional_data; the mesh hash
    must match the supplied mesh."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError("not a functional-data container: bad magic")
        stored = fh.read(64).decode("ascii")
        if stored != mesh.content_hash():
            raise ValueError("mesh hash mismatch: container %s... vs mesh %s..."
                             % (stored[:12], mesh.content_hash()[:12]))
        payload_hash = fh.read(64).decode("ascii")
        payload = fh.read()
        if hashlib.sha256(payload).hexdigest() != payload_hash:
            raise ValueError("payload hash mismatch: file corrupted")
    return _parse_payload(mesh, payload)


def _parse_payload(mesh, payload):
    with io.BytesIO(payload) as fh:
        dim, n, src_n = struct.unpack("<iii", fh.read(12))
        if dim != mesh.dim or n != mesh.n:
            raise ValueError("container mesh descriptor does not match")

        def read_vec():
            (size,) = struct.unpack("<q", fh.read(8))
            return np.frombuffer(fh.read(8 * size), dtype="<f8").copy()

        p1 = read_vec()
        dg0 = read_vec()
        nodal = read_vec()
        raw = read_vec()
        flux = None
        if raw.size:
            flux = CellField(mesh, raw.reshape(mesh.num_cells, mesh.dim))
    return FunctionalData(mesh, p1, dg0, NodalField(mesh, nodal), flux, src_n)


def write_nodal_csv(field, path):
    """CSV of vertex coordinates and nodal values, for plotting."""
    mesh = field.mesh
    cols = ["x", "y", "z"][:mesh.dim]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["value"])
        for p, v in zip(mesh.vertices, field.values):
            w.writerow(["%.17g" % c for c in p] + ["%.17g" % v])
