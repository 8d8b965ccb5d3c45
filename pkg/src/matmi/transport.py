"""Stationary transport solvers for the conductivity update step.

The update equation is div(A(x, gamma) w) = F with w = E x B0 and the
trace of gamma prescribed on the inflow boundary.  Two discretizations:

* DG0 with upwinded face fluxes, for families whose in-plane action is
  linear in the parameter (the isotropic-in-plane case);
* continuous P1 with a Picard (frozen-coefficient) outer loop and
  streamline-upwind stabilization, for nonlinear families.

The P1 scheme is assembled in conservative (flux) form.  Each entry of
A is split as polynomial-in-t plus remainder; freezing all but one
power of the parameter makes the flux linear in the unknown while
keeping the previous iterate in the remaining slots, so a fixed point
of the loop satisfies the unfrozen discrete equation exactly.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import (CellField, NodalField, cell_to_nodal, l2_norm_cell,
                     l2_norm_nodal, mass_matrix)
from .functional import cross_b0
from .mesh import classify_inflow

__all__ = [
    "TransportProblem",
    "PicardOptions",
    "TransportError",
    "solve_linear_dg",
    "solve_nonlinear",
    "solve_nonlinear_dg",
    "solve_nonlinear_ls",
    "expand_coefficients",
    "ExpandedCoefficients",
    "closed_form_coefficients",
    "recover_field_gradients",
]


class TransportError(RuntimeError):
    """Transport solve failure; may carry a Picard change history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


class PicardOptions:
    """Controls for the frozen-coefficient outer loop."""

    def __init__(self, max_outer=50, rel_tol=1e-8, damping=1.0,
                 accept_last=False, supg=1.0):
        if max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not 0.0 < rel_tol < 1.0:
            raise ValueError("rel_tol must lie in (0, 1)")
        if not 0.0 < damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if supg < 0.0:
            raise ValueError("supg scale must be >= 0")
        self.max_outer = int(max_outer)
        self.rel_tol = float(rel_tol)
        self.damping = float(damping)
        self.accept_last = bool(accept_last)
        self.supg = float(supg)


class TransportProblem:
    """One conductivity-update problem.

    Parameters
    ----------
    mesh : Mesh
    family : AnisotropyFamily
    E : CellField
        Electric field of the current outer iterate, shape (nc, 3).
    data : FunctionalData
        Weak source data F(gamma_star).
    inflow_values : callable
        Boundary trace of the true parameter; receives (N, dim) points.
    gamma_ref : NodalField or CellField or None
        Iterate used to evaluate the advective velocity A(gamma) w for
        inflow classification (defaults to 1 everywhere).
    tol_inflow : float
        Characteristic-facet tolerance for the inflow classification.
    """

    def __init__(self, mesh, family, E, data, inflow_values, gamma_ref=None,
                 tol_inflow=1e-12):
        self.mesh = mesh
        self.family = family
        self.E = E
        self.data = data
        self.inflow_values = inflow_values
        if gamma_ref is None:
            gamma_ref = NodalField(mesh, np.ones(mesh.num_vertices))
        self.gamma_ref = gamma_ref
        self.tol_inflow = float(tol_inflow)

    def gamma_ref_cells(self):
        if isinstance(self.gamma_ref, NodalField):
            return self.gamma_ref.cell_means()
        return self.gamma_ref.values

    def inflow_facets(self):
        """Facets of the inflow boundary for velocity A(gamma_ref) w."""
        from .functional import flux_field
        v = flux_field(self.mesh, self.family, self.gamma_ref_cells(), self.E)
        return classify_inflow(self.mesh, CellField(self.mesh, v),
                               self.tol_inflow)


def _centroid_xs(mesh):
    xs = np.zeros((mesh.num_cells, 3))
    xs[:, :mesh.dim] = mesh.cell_centroids
    return xs


def _poly_split_blocks(family, mesh, gamma_c):
    """Frozen flux split A(gamma) ~ gamma * G + H per cell.

    G = sum_{m>=1} P_m gamma_c^(m-1), H = P_0 + remainder(gamma_c), so
    that gamma_c * G + H reproduces A(gamma_c) exactly.  Returns (G, H)
    as (nc, 3, 3) arrays.
    """
    xs = _centroid_xs(mesh)
    P = family.poly_coeffs(xs)                    # (nc, M, 3, 3)
    G = np.zeros((mesh.num_cells, 3, 3))
    tp = np.ones_like(gamma_c)
    for m in range(1, P.shape[1]):
        G += P[:, m] * tp[:, None, None]
        tp = tp * gamma_c
    H = P[:, 0] + family.rational(xs, gamma_c)
    return G, H


# -- DG0 upwind ---------------------------------------------------------

def solve_linear_dg(problem, split=None, stagnation_rel=0.05):
    """DG0 upwind solve of div(gamma * G w + H w) = F.

    Without `split` the flux factors come from the family itself, which
    must then be linear in the parameter (polynomial degree <= 1 in t,
    no remainder).  `split` may supply frozen per-cell factors (G, H),
    each (nc, 3, 3), e.g. from a Picard linearization.

    Cells whose advective throughput is below stagnation_rel times the
    median (e.g. at interior stagnation points of the rotational field,
    where the transport equation carries almost no information) are
    filled by averaging their face neighbors instead.
    """
    mesh, family = problem.mesh, problem.family
    xs = _centroid_xs(mesh)
    if split is None:
        P = family.poly_coeffs(xs)
        if P.shape[1] > 2 or family.rational(xs[:1], np.array([1.0])).any():
            raise TransportError(
                "family %r is nonlinear in the parameter; use solve_nonlinear"
                % family.name)
        G = P[:, 1] if P.shape[1] == 2 else np.zeros((mesh.num_cells, 3, 3))
        H = P[:, 0]
    else:
        G, H = split
    w3 = cross_b0(problem.E.values)               # (nc, 3)
    w = w3[:, :mesh.dim]
    g = np.einsum("cij,cj->ci", G, w3)[:, :mesh.dim]
    h = np.einsum("cij,cj->ci", H, w3)[:, :mesh.dim]

    zero_vel = np.where(np.linalg.norm(g, axis=1) < 1e-14)[0]
    if zero_vel.size == mesh.num_cells:
        raise TransportError(
            "advective velocity vanishes on all cells (first cells: %s)"
            % zero_vel[:10].tolist())

    nc = mesh.num_cells
    rows, cols, vals = [], [], []
    rhs = problem.data.dg0_weak.astype(float).copy()

    L, R = mesh.face_left, mesh.face_right
    nrm, meas = mesh.face_normals, mesh.face_measures
    wf = 0.5 * (w[L] + w[R])
    vn = np.einsum("fd,fd->f", wf, nrm)
    up_is_left = vn >= 0.0
    up = np.where(up_is_left, L, R)
    gn_up = np.einsum("fd,fd->f", np.where(up_is_left[:, None], g[L], g[R]),
                      nrm) * meas
    hn_up = np.einsum("fd,fd->f", np.where(up_is_left[:, None], h[L], h[R]),
                      nrm) * meas
    # flux leaves L, enters R
    rows.extend([L, R])
    cols.extend([up, up])
    vals.extend([gn_up, -gn_up])
    np.add.at(rhs, L, -hn_up)
    np.add.at(rhs, R, hn_up)

    inflow = problem.inflow_facets()
    brow, bcol, bval = [], [], []
    for i, f in enumerate(mesh.boundary_facets):
        gn = float(np.dot(g[f.cell], f.normal)) * f.measure
        hn = float(np.dot(h[f.cell], f.normal)) * f.measure
        if i in inflow:
            gstar = float(np.asarray(
                problem.inflow_values(f.midpoint[None, :])).ravel()[0])
            rhs[f.cell] -= gn * gstar + hn
        else:
            brow.append(f.cell)
            bcol.append(f.cell)
            bval.append(gn)
            rhs[f.cell] -= hn
    rows.append(np.array(brow, dtype=int))
    cols.append(np.array(bcol, dtype=int))
    vals.append(np.array(bval, dtype=float))

    A = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nc, nc)).tocsr()

    # Stagnation handling: sink cells (never upwind of any face) have an
    # empty diagonal and column, and low-throughput cells are dominated
    # by noise in the data; both get neighbor-averaging rows.
    diag = A.diagonal()
    scale = np.zeros(nc)
    np.add.at(scale, L, np.abs(gn_up))
    np.add.at(scale, R, np.abs(gn_up))
    dead = np.where(
        (np.abs(diag) <= 1e-12 * np.maximum(scale, 1e-30))
        | (scale <= stagnation_rel * np.median(scale)))[0]
    if dead.size == nc:
        raise TransportError(
            "advective flux vanishes through every cell (first cells: %s)"
            % dead[:10].tolist())
    if dead.size:
        nbrs = {int(c): [] for c in dead}
        for l, r in zip(L, R):
            if int(l) in nbrs:
                nbrs[int(l)].append(int(r))
            if int(r) in nbrs:
                nbrs[int(r)].append(int(l))
        A = A.tolil()
        for c, nb in nbrs.items():
            A.rows[c] = sorted([c] + nb)
            A.data[c] = [1.0 if j == c else -1.0 / len(nb)
                         for j in A.rows[c]]
            rhs[c] = 0.0
        A = A.tocsr()
    sol = spla.spsolve(A.tocsc(), rhs)
    return CellField(mesh, sol)


def solve_nonlinear_dg(problem, opts=None):
    """Picard iteration on the frozen-flux DG0 upwind discretization.

    Freezes the nonlinear coefficient slots at the current cell values
    (same split as the P1 route) and re-solves the linear DG0 system
    until the relative L2 change drops below rel_tol.  Returns a
    CellField; raises TransportError with the change history otherwise.
    """
    if opts is None:
        opts = PicardOptions()
    mesh = problem.mesh
    lo, hi = problem.family.t_range
    gamma_c = problem.gamma_ref_cells().copy()
    history = []
    for _ in range(opts.max_outer):
        # Coefficients are frozen at the clamped iterate so an overshoot
        # cannot feed back into the linearization.
        split = _poly_split_blocks(problem.family, mesh,
                                   np.clip(gamma_c, lo, hi))
        new_c = solve_linear_dg(problem, split=split).values
        if not np.all(np.isfinite(new_c)):
            raise TransportError("DG0 Picard solve produced non-finite "
                                 "values", history)
        new_c = opts.damping * new_c + (1.0 - opts.damping) * gamma_c
        change = l2_norm_cell(mesh, new_c - gamma_c)
        scale = max(l2_norm_cell(mesh, gamma_c), 1e-30)
        history.append(change / scale)
        gamma_c = new_c
        if history[-1] <= opts.rel_tol:
            break
    else:
        if not opts.accept_last:
            raise TransportError(
                "DG0 Picard loop did not converge in %d iterations (last "
                "change %.3g)" % (opts.max_outer, history[-1]), history)
    out = CellField(mesh, gamma_c)
    out.picard_history = history
    return out


# -- gradient recovery and coefficient expansion ------------------------

def recover_field_gradients(mesh, E):
    """Per-cell derivatives of E1, E2 via lumped-L2 projection to P1.

    Returns (nc, dim, 2): entry [c, i, j] = d E_{j+1} / d x_i on cell c.
    """
    nodal = cell_to_nodal(CellField(mesh, E.values[:, :2]))   # (nv, 2)
    out = np.zeros((mesh.num_cells, mesh.dim, 2))
    for j in range(2):
        vals = nodal[:, j][mesh.cells]                        # (nc, nloc)
        out[:, :, j] = np.einsum("ci,cid->cd", vals, mesh.cell_grads)
    return out


def _grad_w(mesh, grad_E):
    """Derivatives of w = (E2, -E1, 0): (nc, dim, 3)."""
    gw = np.zeros((mesh.num_cells, mesh.dim, 3))
    gw[:, :, 0] = grad_E[:, :, 1]
    gw[:, :, 1] = -grad_E[:, :, 0]
    return gw


class ExpandedCoefficients:
    """Per-cell coefficient data for div(A(x, gamma) w).

    The divergence is organised as

        div(A(gamma) w) = beta(gamma) . grad(gamma) + D(x, gamma)

    with beta = dA/dt(gamma) w and D collecting all terms free of
    grad(gamma).  D splits into a polynomial-in-gamma part with
    coefficients ``d_poly`` (nc, M) and a remainder evaluated on demand.
    For the families with hand-expanded closed forms the attribute
    ``closed_form`` carries those coefficient fields.
    """

    def __init__(self, family, mesh, E):
        self.family = family
        self.mesh = mesh
        self.E = E
        self.w3 = cross_b0(E.values)                          # (nc, 3)
        self.grad_E = recover_field_gradients(mesh, E)
        self.grad_w = _grad_w(mesh, self.grad_E)              # (nc, dim, 3)
        xs = _centroid_xs(mesh)
        self._xs = xs
        P = family.poly_coeffs(xs)                            # (nc, M, 3, 3)
        Pg = family.poly_coeffs_grad(xs)                      # (nc, 3, M, 3, 3)
        d = mesh.dim
        # d_m = P_m : grad_w + (div_x P_m) . w
        self.d_poly = (
            np.einsum("cmij,cij->cm", P[:, :, :d, :], self.grad_w)
            + np.einsum("cimij,cj->cm", Pg, self.w3))
        self._P = P
        self.closed_form = closed_form_coefficients(family.name, mesh, E,
                                        grad_E=self.grad_E)

    def velocity(self, gamma_c):
        """Advective velocity dA/dt(gamma) w per cell, in-plane."""
        dA = self.family.deriv_t_many(self._xs, gamma_c, check_range=False)
        return np.einsum("cij,cj->ci", dA, self.w3)[:, :self.mesh.dim]

    def reaction_remainder(self, gamma_c):
        """Non-polynomial part of D at the frozen parameter."""
        rat = self.family.rational(self._xs, gamma_c)
        d = self.mesh.dim
        return np.einsum("cij,cij->c", rat[:, :d, :], self.grad_w)

    def d_value(self, gamma_c):
        """D(x, gamma) per cell (all grad-gamma-free terms)."""
        tp = np.ones_like(gamma_c)
        out = np.zeros_like(gamma_c)
        for m in range(self.d_poly.shape[1]):
            out += self.d_poly[:, m] * tp
            tp = tp * gamma_c
        return out + self.reaction_remainder(gamma_c)

    def frozen_reaction(self, gamma_c):
        """Picard reaction coefficient: all powers of gamma beyond the
        first frozen at gamma_c, i.e. sum_{m>=1} d_m gamma_c^(m-1)."""
        out = np.zeros_like(gamma_c)
        tp = np.ones_like(gamma_c)
        for m in range(1, self.d_poly.shape[1]):
            out += self.d_poly[:, m] * tp
            tp = tp * gamma_c
        return out

    def divergence(self, gamma_c, grad_gamma):
        """Generic product-rule value of div(A(gamma) w) per cell."""
        beta = self.velocity(gamma_c)
        adv = np.einsum("cd,cd->c", beta, grad_gamma[:, :self.mesh.dim])
        return adv + self.d_value(gamma_c)


def expand_coefficients(family, E, mesh=None):
    """Per-cell coefficient record for the transport equation."""
    if mesh is None:
        mesh = E.mesh
    return ExpandedCoefficients(family, mesh, E)


def closed_form_coefficients(name, mesh, E, grad_E=None):
    """Hand-expanded coefficient fields for the nonlinear families
    (D2, D3, D4); None for other names.

    Each formula is derived symbolically from the family's matrix and
    cross-checked against the generic product rule (see the
    closed-form consistency tests), so the two evaluation routes agree
    to machine precision per cell.
    """
    if name not in ("D2", "D3", "D4"):
        return None
    if grad_E is None:
        grad_E = recover_field_gradients(mesh, E)
    E1 = E.values[:, 0]
    E2 = E.values[:, 1]
    E1x = grad_E[:, 0, 0]
    E1y = grad_E[:, 1, 0]
    E2x = grad_E[:, 0, 1]
    E2y = grad_E[:, 1, 1]
    if name == "D2":
        # a1 g^2 + a2 g + a3 g g_x + a4 g_x - a5 g_y + c
        return {
            "a1": 0.4 * E2x,
            "a2": 0.8 * E2x - 3.0 * E1y,
            "a3": 0.8 * E2,
            "a4": 0.8 * E2,
            "a5": 3.0 * E1,
            "c": 0.4 * E2x - 0.01 * E1x + 0.01 * E2y,
        }
    if name == "D3":
        # a1 g^2 + a2 g g_y + a3 g_y + a4 g + a5 g_x + a6 g g_x + c
        return {
            "a1": 0.4 * E2x + 0.01 * E1x - 0.01 * E2y,
            "a2": -0.02 * E2,
            "a3": 0.01 * E2 - 3.0 * E1,
            "a4": 0.8 * E2x - 0.01 * E1x + 0.01 * E2y - 3.0 * E1y,
            "a5": 0.8 * E2 - 0.01 * E1,
            "a6": 0.8 * E2 + 0.02 * E1,
            "c": 0.4 * E2x,
        }
    # D4: a1 g^2 + a2 g + a3 g g_x + a4(g) g_x + a5(g) g_y + c(g),
    # where the "(g)" coefficients carry the rational 1/(g+20) entries.
    return {
        "a1": 0.4 * E2x,
        "a2": 0.8 * E2x - 3.0 * E1y,
        "a3": 0.8 * E2,
        "a4_poly": 0.8 * E2,          # + E1/(g+20)^2
        "a4_rat_num": E1,
        "a5_poly": -3.0 * E1,         # - E2/(g+20)^2
        "a5_rat_num": -E2,
        "c_poly": 0.4 * E2x,          # + (E2y - E1x)/(g+20)
        "c_rat_num": E2y - E1x,
    }


def closed_form_divergence(name, coeffs, gamma_c, grad_gamma):
    """Evaluate the hand-expanded divergence for D2/D3/D4 per cell."""
    g = gamma_c
    gx = grad_gamma[:, 0]
    gy = grad_gamma[:, 1]
    c = coeffs
    if name == "D2":
        return (c["a1"] * g ** 2 + c["a2"] * g + c["a3"] * g * gx
                + c["a4"] * gx - c["a5"] * gy + c["c"])
    if name == "D3":
        return (c["a1"] * g ** 2 + c["a2"] * g * gy + c["a3"] * gy
                + c["a4"] * g + c["a5"] * gx + c["a6"] * g * gx + c["c"])
    if name == "D4":
        s = 1.0 / (g + 20.0)
        return (c["a1"] * g ** 2 + c["a2"] * g + c["a3"] * g * gx
                + (c["a4_poly"] + c["a4_rat_num"] * s ** 2) * gx
                + (c["a5_poly"] + c["a5_rat_num"] * s ** 2) * gy
                + c["c_poly"] + c["c_rat_num"] * s)
    raise KeyError("no hand-expanded form for %r" % name)


# -- least-squares P1 Picard solver -------------------------------------

def _flux_operator(problem, gamma_bar_c):
    """Linear map gamma -> P1 weak divergence of the frozen flux.

    Freezing the split at gamma_bar_c, the flux on each cell is
    q = mean(gamma) * g + h with cellwise-constant g, h -- precisely the
    quadrature the flux-form data uses, so L gamma* + c reproduces
    same-mesh data exactly.  Returns (L, c) with c the gamma-free part.
    """
    mesh = problem.mesh
    nloc = mesh.dim + 1
    nv = mesh.num_vertices
    vol = mesh.cell_volumes
    G, H = _poly_split_blocks(problem.family, mesh, gamma_bar_c)
    w3 = cross_b0(problem.E.values)
    g = np.einsum("cij,cj->ci", G, w3)[:, :mesh.dim]
    h = np.einsum("cij,cj->ci", H, w3)[:, :mesh.dim]

    gdphi = np.einsum("cid,cd->ci", mesh.cell_grads, g)   # (nc, nloc)
    hdphi = np.einsum("cid,cd->ci", mesh.cell_grads, h)
    ke = -(vol[:, None, None] * gdphi[:, :, None]) \
        * np.full((1, 1, nloc), 1.0 / nloc)
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    c = np.zeros(nv)
    np.add.at(c, mesh.cells.ravel(), (-vol[:, None] * hdphi).ravel())

    brow, bcol, bval = [], [], []
    for f in mesh.boundary_facets:
        gn = float(np.dot(g[f.cell], f.normal)) * f.measure
        hn = float(np.dot(h[f.cell], f.normal)) * f.measure
        cell_vs = mesh.cells[f.cell]
        for v in f.vertices:
            brow.extend([int(v)] * nloc)
            bcol.extend(cell_vs.tolist())
            bval.extend([gn / (mesh.dim * nloc)] * nloc)
        c[f.vertices] += hn / mesh.dim
    L = sp.coo_matrix(
        (np.concatenate([ke.ravel(), np.array(bval)]),
         (np.concatenate([rows, np.array(brow, dtype=int)]),
          np.concatenate([cols, np.array(bcol, dtype=int)]))),
        shape=(nv, nv)).tocsr()
    return L, c


def _h1_matrix(mesh):
    """Unit-coefficient stiffness plus mass (an H1 inner product)."""
    g = mesh.cell_grads
    ke = np.einsum("c,cid,cjd->cij", mesh.cell_volumes, g, g)
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    K = sp.coo_matrix((ke.ravel(), (rows, cols)),
                      shape=(mesh.num_vertices, mesh.num_vertices)).tocsr()
    return K + mass_matrix(mesh)


def solve_nonlinear_ls(problem, opts=None, alpha=1e-2, anchor=None):
    """Picard iteration solving the frozen flux equation in least squares.

    Each step minimizes ||L(gamma_bar) gamma - b||^2 plus an H1 penalty
    alpha * ||gamma - anchor||_H1^2 (scaled to the normal matrix); the
    anchor defaults to the incoming iterate but a fixed background field
    keeps the outer loop's penalty stationary.  The inflow trace is
    eliminated strongly.  The penalty vanishes when the outer loop has
    converged, so the regularization does not bias the overall limit; it
    damps the near-null-space components that arise on closed
    streamlines of the rotational field.  The inner loop only updates
    the frozen coefficients, so it converges at the Picard rate.
    """
    if opts is None:
        opts = PicardOptions()
    mesh = problem.mesh
    nv = mesh.num_vertices
    lo, hi = problem.family.t_range

    inflow = problem.inflow_facets()
    iv = sorted({int(v) for i in inflow
                 for v in mesh.boundary_facets[i].vertices})
    iv = np.array(iv, dtype=int)
    free = np.ones(nv, dtype=bool)
    free[iv] = False
    ivals = (np.asarray(problem.inflow_values(mesh.vertices[iv]),
                        dtype=float).ravel()
             if iv.size else np.zeros(0))

    R = _h1_matrix(mesh)
    M = mass_matrix(mesh)
    if isinstance(problem.gamma_ref, NodalField):
        gamma = problem.gamma_ref.values.copy()
    else:
        gamma = cell_to_nodal(problem.gamma_ref)
    gamma[iv] = ivals
    if anchor is None:
        anchor = gamma.copy()
    else:
        anchor = anchor.values.copy()
        anchor[iv] = ivals

    history = []
    for _ in range(opts.max_outer):
        gbar_c = np.clip(NodalField(mesh, gamma).cell_means(), lo, hi)
        L, c = _flux_operator(problem, gbar_c)
        b = problem.data.p1_weak - c
        N = (L.T @ L).tocsr()
        scale = alpha * N.diagonal().mean() / R.diagonal().mean()
        A = N + scale * R
        rhs = L.T @ b + scale * (R @ anchor)
        Aff = A[free][:, free]
        rhs_f = rhs[free] - A[free][:, ~free] @ ivals
        new_vals = gamma.copy()
        new_vals[free] = spla.spsolve(Aff.tocsc(), rhs_f)
        if not np.all(np.isfinite(new_vals)):
            raise TransportError("least-squares Picard produced non-finite "
                                 "values", history)
        new_vals = opts.damping * new_vals + (1.0 - opts.damping) * gamma
        change = l2_norm_nodal(mesh, new_vals - gamma, M)
        scale_g = max(l2_norm_nodal(mesh, gamma, M), 1e-30)
        history.append(change / scale_g)
        gamma = new_vals
        if history[-1] <= opts.rel_tol:
            break
    else:
        if not opts.accept_last:
            raise TransportError(
                "least-squares Picard did not converge in %d iterations "
                "(last change %.3g)" % (opts.max_outer, history[-1]),
                history)
    out = NodalField(mesh, gamma)
    out.picard_history = history
    return out


# -- stabilized P1 Picard solver ----------------------------------------

def _assemble_picard(problem, coeffs, gamma_bar, inflow_vertices,
                     inflow_vals, F_cells, supg_scale=1.0):
    """One frozen-coefficient linear system (conservative + SUPG)."""
    mesh = problem.mesh
    nloc = mesh.dim + 1
    nv = mesh.num_vertices
    vol = mesh.cell_volumes
    lo, hi = problem.family.t_range
    gbar_c = np.clip(gamma_bar.cell_means(), lo, hi)

    G, H = _poly_split_blocks(problem.family, mesh, gbar_c)
    w3 = coeffs.w3
    g = np.einsum("cij,cj->ci", G, w3)[:, :mesh.dim]
    h = np.einsum("cij,cj->ci", H, w3)[:, :mesh.dim]

    gdphi = np.einsum("cid,cd->ci", mesh.cell_grads, g)   # (nc, nloc)

    # Galerkin, conservative: -int gamma g . grad(phi_i), gamma P1
    ke = -(vol[:, None, None] * gdphi[:, :, None]
           * np.full((1, 1, nloc), 1.0 / nloc))
    rhs = problem.data.p1_weak.astype(float).copy()
    hdphi = np.einsum("cid,cd->ci", mesh.cell_grads, h)
    rhs_cells = vol[:, None] * hdphi

    # SUPG: tau (g . grad phi_i) [g . grad gamma + rho gamma_mean - s]
    rho = coeffs.frozen_reaction(gbar_c)
    kappa = coeffs.d_poly[:, 0] + coeffs.reaction_remainder(gbar_c)
    gnorm = np.linalg.norm(g, axis=1)
    tau = supg_scale * np.where(
        gnorm > 1e-14,
        mesh.cell_diameters / (2.0 * np.maximum(gnorm, 1e-300)), 0.0)
    tv = tau * vol
    ke += tv[:, None, None] * gdphi[:, :, None] * (
        gdphi[:, None, :] + rho[:, None, None] / nloc)
    rhs_cells += (tv * (F_cells - kappa))[:, None] * gdphi

    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(nv, nv)).tolil()
    np.add.at(rhs, mesh.cells.ravel(), rhs_cells.ravel())

    # Boundary flux term over all boundary facets.  The flux trace is
    # evaluated with gamma at the cell mean (the same one-point rule the
    # flux-form data uses), keeping the scheme exactly consistent with
    # data generated on this mesh.
    for f in mesh.boundary_facets:
        gn = float(np.dot(g[f.cell], f.normal)) * f.measure
        hn = float(np.dot(h[f.cell], f.normal)) * f.measure
        cell_vs = mesh.cells[f.cell]
        for v in f.vertices:
            A[int(v), cell_vs] = (np.asarray(A[int(v), cell_vs].todense()).ravel()
                                  + gn / (mesh.dim * nloc))
        rhs[f.vertices] -= hn / mesh.dim

    # strong inflow rows
    for v, val in zip(inflow_vertices, inflow_vals):
        A.rows[v] = [int(v)]
        A.data[v] = [1.0]
        rhs[v] = val
    return A.tocsr(), rhs


def solve_nonlinear(problem, opts=None):
    """Picard iteration on the frozen-coefficient P1 SUPG discretization.

    Returns the NodalField solution; raises TransportError with the
    change history on non-convergence unless opts.accept_last is set.
    """
    if opts is None:
        opts = PicardOptions()
    mesh = problem.mesh
    coeffs = expand_coefficients(problem.family, problem.E, mesh)

    inflow = problem.inflow_facets()
    iv = sorted({int(v) for i in inflow
                 for v in mesh.boundary_facets[i].vertices})
    iv = np.array(iv, dtype=int)
    ivals = (np.asarray(problem.inflow_values(mesh.vertices[iv]),
                        dtype=float).ravel()
             if iv.size else np.zeros(0))

    F_cells = problem.data.nodal_projection.cell_means()
    if isinstance(problem.gamma_ref, NodalField):
        gamma = problem.gamma_ref.copy()
    else:
        gamma = NodalField(mesh, cell_to_nodal(problem.gamma_ref))

    M = mass_matrix(mesh)
    history = []
    for _ in range(opts.max_outer):
        A, rhs = _assemble_picard(problem, coeffs, gamma, iv, ivals, F_cells,
                                  supg_scale=opts.supg)
        new_vals = spla.spsolve(A.tocsc(), rhs)
        if not np.all(np.isfinite(new_vals)):
            raise TransportError("Picard linear solve produced non-finite "
                                 "values", history)
        new_vals = opts.damping * new_vals \
            + (1.0 - opts.damping) * gamma.values
        change = l2_norm_nodal(mesh, new_vals - gamma.values, M)
        scale = max(l2_norm_nodal(mesh, gamma.values, M), 1e-30)
        history.append(change / scale)
        gamma = NodalField(mesh, new_vals)
        if history[-1] <= opts.rel_tol:
            break
    else:
        if not opts.accept_last:
            raise TransportError(
                "Picard loop did not converge in %d iterations (last "
                "change %.3g)" % (opts.max_outer, history[-1]), history)
    gamma.picard_history = history
    return gamma
