import numpy as np
import pytest

from matmi.anisotropy import builtin
from matmi.fields import interpolate_nodal, l2_norm_cell, l2_norm_nodal
from matmi.functional import cross_b0
from matmi.mesh import build_unit_square
from matmi.neumann import (SolverError, assemble, etilde, electric_field,
                           export_matrix_market, load_vector,
                           solve_mean_zero, solve_field)

D1 = builtin("D1").with_t_range(0.25, 4.0)


def _ones(mesh):
    return interpolate_nodal(mesh, lambda p: np.ones(p.shape[0]))


def test_etilde_formula():
    assert np.allclose(etilde([0.2, 0.6]), [-0.3, 0.1, 0.0], atol=1e-15)


def test_stiffness_symmetric_with_constant_null_space():
    mesh = build_unit_square(6)
    system = assemble(mesh, D1, _ones(mesh))
    K = system.matrix
    assert abs(K - K.T).max() < 1e-12
    assert np.abs(K @ np.ones(mesh.num_vertices)).max() < 1e-12


def test_solution_has_zero_mean():
    mesh = build_unit_square(8)
    u, _ = solve_field(mesh, D1, _ones(mesh))
    assert abs(u.values.mean()) < 1e-10


def _manufactured_error(n):
    """L2 error against u = cos(pi x) cos(pi y) with gamma = 1 (D1).

    With A = I the problem is -Laplace u = f, f = 2 pi^2 u, and the
    manufactured solution satisfies the homogeneous Neumann condition.
    """
    mesh = build_unit_square(n)
    exact = lambda p: np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])
    f = lambda p: 2 * np.pi ** 2 * exact(p)
    system = assemble(mesh, D1, _ones(mesh))
    system.rhs = load_vector(mesh, f)
    vals, _ = solve_mean_zero(system, tol=1e-12)
    diff = vals - exact(mesh.vertices)   # both have zero mean
    return l2_norm_nodal(mesh, diff)


def test_manufactured_solution_second_order():
    e16, e32 = _manufactured_error(16), _manufactured_error(32)
    order = np.log2(e16 / e32)
    assert order >= 1.9


def test_jacobi_preconditioner_agrees():
    mesh = build_unit_square(10)
    gamma = interpolate_nodal(mesh, lambda p: 1.0 + 0.5 * p[:, 0])
    u_plain, _ = solve_field(mesh, D1, gamma, tol=1e-12)
    u_jac, _ = solve_field(mesh, D1, gamma, tol=1e-12, jacobi=True)
    assert np.allclose(u_plain.values, u_jac.values, atol=1e-8)


def test_electric_field_composition():
    mesh = build_unit_square(6)
    u, E = solve_field(mesh, D1, _ones(mesh))
    manual = etilde(mesh.cell_centroids)
    manual[:, :2] += u.cell_gradients()
    assert np.allclose(E.values, manual, atol=1e-12)
    assert np.allclose(electric_field(mesh, u).values, E.values, atol=1e-15)


def test_energy_bound():
    # ||grad u|| <= Lambda ||Etilde|| for the ellipticity band of the family
    mesh = build_unit_square(12)
    gamma = interpolate_nodal(mesh, lambda p: 1 + 0.8 * p[:, 0] * p[:, 1])
    u, _ = solve_field(mesh, D1, gamma)
    gn = l2_norm_cell(mesh, u.cell_gradients())
    en = l2_norm_cell(mesh, etilde(mesh.cell_centroids))
    assert gn <= 4.0 * en


def test_weak_curl_identity():
    # div(E x B0) = 1 holds exactly in the weak sense: testing the flux
    # E x B0 against P1 hat functions reproduces the load of constant 1
    for n in (8, 16):
        mesh = build_unit_square(n)
        from matmi.functional import weak_p1_from_flux
        u, E = solve_field(mesh, D1, _ones(mesh), tol=1e-12)
        q = cross_b0(E.values)[:, :mesh.dim]
        weak = weak_p1_from_flux(mesh, q)
        from matmi.fields import mass_matrix
        import scipy.sparse.linalg as spla
        proj = spla.spsolve(mass_matrix(mesh).tocsc(), weak)
        dev = l2_norm_nodal(mesh, proj - 1.0)
        assert dev <= 5.0 / n


def test_solver_error_carries_history():
    mesh = build_unit_square(8)
    system = assemble(mesh, D1, _ones(mesh))
    system.rhs = load_vector(mesh, lambda p: p[:, 0])
    with pytest.raises(SolverError) as err:
        solve_mean_zero(system, tol=1e-14, max_iter=2)
    assert len(err.value.residuals) > 0


def test_matrix_market_round_trip(tmp_path):
    from scipy.io import mmread
    mesh = build_unit_square(4)
    system = assemble(mesh, D1, _ones(mesh))
    system.rhs = load_vector(mesh, lambda p: p[:, 1])
    prefix = str(tmp_path / "sys")
    export_matrix_market(system, prefix)
    K = mmread(prefix + "_K.mtx").tocsr()
    b = np.asarray(mmread(prefix + "_b.mtx")).ravel()
    assert abs(K - system.matrix).max() < 1e-15
    assert np.allclose(b, system.rhs, atol=1e-15)
