import numpy as np
import pytest

from matmi.presets import PRESETS, PRESET_NAMES, SLICE_LEVELS, get_preset


def test_preset_table_is_complete():
    assert PRESET_NAMES == tuple("example%d" % i for i in range(1, 7))
    for name, p in PRESETS.items():
        assert p.name == name
        assert p.family_name == "D%s" % name[-1]
        assert p.dim == (3 if name == "example6" else 2)
        assert p.t_range[0] < p.t_range[1]
        assert p.lam >= 1.0
        assert callable(p.gamma_star)
        assert p.family().t_range == p.t_range


def test_unknown_preset_rejected():
    with pytest.raises(KeyError, match="unknown preset"):
        get_preset("example7")


def test_slice_levels():
    assert SLICE_LEVELS == (0.0, 0.282, 0.513, 0.718, 0.897)


def _pts2(*xy):
    return np.array(xy, dtype=float)


def test_example1_target_values():
    g = get_preset("example1").gamma_star
    assert g(_pts2([0.5, 0.5]))[0] == pytest.approx(2.0, abs=1e-14)
    assert g(_pts2([0.0, 0.0]))[0] == pytest.approx(
        1.0 + np.exp(-25.0), abs=1e-14)


def test_example2_target_values():
    g = get_preset("example2").gamma_star
    assert g(_pts2([0.65, 0.65]))[0] == pytest.approx(
        1.0 + 0.5 * np.exp(-2 * 0.4 ** 2 / 0.05), abs=1e-14)
    assert g(_pts2([0.25, 0.25]))[0] == pytest.approx(
        0.5 + np.exp(-2 * 0.4 ** 2 / 0.02), abs=1e-14)


def test_example3_target_values():
    g = get_preset("example3").gamma_star
    assert g(_pts2([0.5, 0.5]))[0] == pytest.approx(2.0, abs=1e-14)
    p = _pts2([0.3, 0.8])
    r2 = 0.2 ** 2 + 0.3 ** 2
    want = np.cos(75 * r2) * np.exp(-r2 / 2.0) + 1.0
    assert g(p)[0] == pytest.approx(want, abs=1e-14)


def test_example4_target_is_a_tent():
    g = get_preset("example4").gamma_star
    xs = np.array([[0.0, 0.0], [0.3, 0.1], [0.4, 0.9],
                   [0.5, 0.5], [0.6, 0.2], [0.7, 0.0], [1.0, 1.0]])
    want = [1.0, 1.0, 1.5, 2.0, 1.5, 1.0, 1.0]
    assert np.allclose(g(xs), want, atol=1e-14)


def test_example5_target_values():
    g = get_preset("example5").gamma_star
    p = _pts2([0.4, 0.6])
    want = (np.sin(4.0) * np.sin(3.0) * np.sin(7.0 * 0.6)
            * np.sin(-0.4) + 1.0)
    assert g(p)[0] == pytest.approx(want, abs=1e-14)
    # vanishing sine factors leave the background value
    assert g(_pts2([0.0, 0.5]))[0] == pytest.approx(1.0, abs=1e-14)


def test_example6_target_is_spherical_inclusion():
    g = get_preset("example6").gamma_star
    pts = np.array([[0.5, 0.5, 0.5], [0.2, 0.5, 0.5],
                    [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    assert np.allclose(g(pts), [2.0, 2.0, 1.0, 1.0], atol=1e-14)


def test_targets_stay_inside_parameter_ranges():
    rng = np.random.default_rng(9)
    for p in PRESETS.values():
        pts = rng.uniform(0.0, 1.0, size=(2000, p.dim))
        vals = p.gamma_star(pts)
        lo, hi = p.t_range
        assert vals.min() >= lo - 1e-12
        assert vals.max() <= hi + 1e-12
