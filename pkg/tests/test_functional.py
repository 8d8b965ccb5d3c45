import numpy as np
import pytest

from matmi.anisotropy import builtin
from matmi.fields import interpolate_nodal, l2_norm_nodal, mass_matrix
from matmi.functional import (cross_b0, eval_p1, load_functional_data,
                              save_functional_data, synthesize,
                              write_nodal_csv)
from matmi.mesh import build_unit_square

D1 = builtin("D1").with_t_range(0.25, 4.0)


def _gamma(p):
    return 1.0 + 0.5 * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])


def test_cross_b0_componentwise():
    assert np.allclose(cross_b0([1.0, 2.0, 5.0]), [2.0, -1.0, 0.0])


def test_weak_forms_agree_on_total_mass():
    # summing either weak vector integrates F over the domain, so both
    # must give the boundary flux integral of q = A (E x B0)
    mesh = build_unit_square(12)
    data = synthesize(D1, _gamma, mesh)
    assert data.p1_weak.sum() == pytest.approx(data.dg0_weak.sum(), abs=1e-10)
    assert data.p1_weak.sum() == pytest.approx(data.boundary_flux_total())


def test_refined_data_converges_to_same_projection():
    mesh = build_unit_square(12)
    plain = synthesize(D1, _gamma, mesh)
    refined = synthesize(D1, _gamma, mesh, refine=2)
    assert refined.flux is None
    assert refined.source_mesh_resolution == 24
    diff = l2_norm_nodal(mesh, plain.nodal_projection.values
                         - refined.nodal_projection.values)
    scale = l2_norm_nodal(mesh, plain.nodal_projection.values)
    assert diff <= 0.2 * scale


def test_refine_must_be_positive():
    mesh = build_unit_square(4)
    with pytest.raises(ValueError):
        synthesize(D1, _gamma, mesh, refine=0)


def test_save_load_round_trip(tmp_path):
    mesh = build_unit_square(8)
    data = synthesize(D1, _gamma, mesh)
    path = str(tmp_path / "data.bin")
    save_functional_data(data, path)
    back = load_functional_data(mesh, path)
    assert np.array_equal(back.p1_weak, data.p1_weak)
    assert np.array_equal(back.dg0_weak, data.dg0_weak)
    assert np.array_equal(back.nodal_projection.values,
                          data.nodal_projection.values)
    assert np.array_equal(back.flux.values, data.flux.values)
    assert back.source_mesh_resolution == 8


def test_load_rejects_wrong_mesh(tmp_path):
    mesh = build_unit_square(8)
    data = synthesize(D1, _gamma, mesh)
    path = str(tmp_path / "data.bin")
    save_functional_data(data, path)
    with pytest.raises(ValueError, match="mesh hash"):
        load_functional_data(build_unit_square(9), path)


def test_load_rejects_corrupted_payload(tmp_path):
    mesh = build_unit_square(8)
    data = synthesize(D1, _gamma, mesh)
    path = str(tmp_path / "data.bin")
    save_functional_data(data, path)
    raw = bytearray(open(path, "rb").read())
    raw[8 + 64 + 64 + 150] ^= 0xFF          # flip one payload byte
    open(path, "wb").write(bytes(raw))
    with pytest.raises(ValueError, match="corrupted"):
        load_functional_data(mesh, path)


def test_load_rejects_bad_magic(tmp_path):
    path = str(tmp_path / "junk.bin")
    open(path, "wb").write(b"NOTMAGIC" + b"\x00" * 200)
    with pytest.raises(ValueError, match="magic"):
        load_functional_data(build_unit_square(4), path)


def test_eval_p1_reproduces_linear_field():
    mesh = build_unit_square(6)
    f = interpolate_nodal(mesh, lambda p: 2 * p[:, 0] - p[:, 1] + 0.5)
    pts = np.array([[0.13, 0.77], [0.5, 0.5], [1.0, 0.0]])
    want = 2 * pts[:, 0] - pts[:, 1] + 0.5
    assert np.allclose(eval_p1(f, pts), want, atol=1e-12)


def test_write_nodal_csv(tmp_path):
    mesh = build_unit_square(2)
    f = interpolate_nodal(mesh, lambda p: p[:, 0])
    path = tmp_path / "f.csv"
    write_nodal_csv(f, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) == 1 + mesh.num_vertices
