import numpy as np
import pytest

from matmi.anisotropy import (builtin, check_admissibility, eval_A,
                              eval_dA_dt, polynomial_family)

ORIGIN = np.zeros(3)


def test_d1_is_in_plane_isotropic():
    A = eval_A(builtin("D1"), ORIGIN, 1.7)
    assert np.allclose(A, np.diag([1.7, 1.7, 1.0]), atol=1e-14)


def test_d2_matches_closed_form():
    t = 0.9
    A = eval_A(builtin("D2"), ORIGIN, t)
    want = np.array([[0.4 * (t + 1) ** 2, 0.01, 0],
                     [0.01, 3 * t, 0],
                     [0, 0, t]])
    assert np.allclose(A, want, atol=1e-14)


def test_d3_off_diagonal_is_quadratic():
    t = 1.3
    A = eval_A(builtin("D3"), ORIGIN, t)
    assert A[0, 1] == pytest.approx(0.01 * t * (1 - t), abs=1e-14)
    assert A[0, 1] == A[1, 0]


def test_d4_off_diagonal_is_rational():
    t = 1.1
    A = eval_A(builtin("D4"), ORIGIN, t)
    assert A[0, 1] == pytest.approx(1.0 / (t + 20.0), abs=1e-14)
    dA = eval_dA_dt(builtin("D4"), ORIGIN, t)
    assert dA[0, 1] == pytest.approx(-1.0 / (t + 20.0) ** 2, abs=1e-14)


def test_d5_d6_spatial_off_diagonal():
    t = 1.2
    x = np.array([0.3, 0.7, 0.0])
    A5 = eval_A(builtin("D5"), x, t)
    assert A5[0, 1] == pytest.approx(0.25 * (0.3 ** 2 + 0.7 ** 2) * t,
                                     abs=1e-14)
    A6 = eval_A(builtin("D6"), x, t)
    assert A6[0, 1] == pytest.approx(
        0.25 * ((0.3 - 0.5) ** 2 + (0.7 - 0.5) ** 2) * t, abs=1e-14)


def test_derivative_matches_difference_quotient():
    fam = builtin("D3")
    t, h = 1.0, 1e-6
    dA = eval_dA_dt(fam, ORIGIN, t)
    fd = (eval_A(fam, ORIGIN, t + h) - eval_A(fam, ORIGIN, t - h)) / (2 * h)
    assert np.allclose(dA, fd, atol=1e-8)


def test_spatial_gradient_matches_difference_quotient():
    fam = builtin("D6")
    x = np.array([[0.3, 0.6, 0.0]])
    t = np.array([1.4])
    G = fam.grad_x_many(x, t)[0]
    h = 1e-6
    for i in range(2):
        xp, xm = x.copy(), x.copy()
        xp[0, i] += h
        xm[0, i] -= h
        fd = (fam.eval_many(xp, t) - fam.eval_many(xm, t))[0] / (2 * h)
        assert np.allclose(G[i], fd, atol=1e-8)


def test_symmetry_everywhere():
    rng = np.random.default_rng(3)
    xs = rng.uniform(0, 1, size=(20, 3))
    for name in ("D1", "D2", "D3", "D4", "D5", "D6"):
        fam = builtin(name)
        ts = rng.uniform(*fam.t_range, size=20)
        A = fam.eval_many(xs, ts)
        assert np.allclose(A, np.transpose(A, (0, 2, 1)), atol=1e-14)


def test_with_t_range_enforced():
    fam = builtin("D1").with_t_range(0.5, 2.0)
    with pytest.raises(ValueError):
        fam.eval_many(np.zeros((1, 3)), [3.0])
    # the relaxed call is still available for diagnostics
    fam.eval_many(np.zeros((1, 3)), [3.0], check_range=False)


def test_admissibility_report_d1():
    fam = builtin("D1").with_t_range(0.5, 2.0)
    rep = check_admissibility(fam, 6, lambda_declared=2.0)
    assert rep.ellipticity_pass
    assert rep.lambda_min == pytest.approx(0.5, abs=1e-12)
    assert rep.lambda_max == pytest.approx(2.0, abs=1e-12)
    assert rep.lambda_est >= 2.0


def test_admissibility_detects_violated_bounds():
    fam = builtin("D2").with_t_range(0.1, 2.0)
    # at t = 0.1 the (2,2) entry is 0.3 < 1/1.5, violating the declared
    # ellipticity band... and the (3,3) entry is 0.1
    rep = check_admissibility(fam, 6, lambda_declared=1.5)
    assert not rep.ellipticity_pass


def test_custom_polynomial_family():
    fam = polynomial_family("poly", [np.eye(3), 0.5 * np.eye(3)],
                            t_range=(0.0, 2.0))
    A = eval_A(fam, ORIGIN, 2.0)
    assert np.allclose(A, 2.0 * np.eye(3), atol=1e-14)
    with pytest.raises(ValueError):
        polynomial_family("bad", [[[1, 2, 0], [0, 1, 0], [0, 0, 1]]])


def test_unknown_builtin_rejected():
    with pytest.raises(KeyError):
        builtin("D9")
