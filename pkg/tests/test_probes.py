import numpy as np
import pytest

from spfem import fields
from spfem.fem import FEFunction
from spfem.mesh import refine_uniform, refinement_family, structured_square, unit_square
from spfem.probes import (
    GridSampling,
    default_gamma_grid,
    hl_maximal,
    holder_trend,
    sharp_maximal_local,
    square_inside_mask,
    verify_green_gradient_bound,
    verify_green_holder_bound,
    verify_localization,
    verify_mean_oscillation_lemma,
    verify_sharp_maximal_lemma,
)
from spfem.weights import Box, FeatureSet, PowerWeight

BOX = Box(0.0, 0.0, 1.0)


def _brute_hl(f):
    n = f.shape[0]
    out = np.abs(f).copy()
    s = 2
    while s <= n:
        for a in range(n - s + 1):
            for b in range(n - s + 1):
                avg = np.abs(f[a:a + s, b:b + s]).mean()
                out[a:a + s, b:b + s] = np.maximum(out[a:a + s, b:b + s], avg)
        s *= 2
    return out


class TestHL:
    def test_constant(self):
        g = GridSampling(BOX, np.full((16, 16), -2.5))
        assert np.all(hl_maximal(g).values == 2.5)

    def test_single_cell_indicator(self):
        f = np.zeros((8, 8))
        f[0, 0] = 1.0
        M = hl_maximal(GridSampling(BOX, f)).values
        assert M[0, 0] == 1.0
        assert M[7, 7] == pytest.approx(1 / 64, rel=1e-15)

    def test_matches_brute_force(self, rng):
        f = rng.normal(size=(16, 16))
        assert np.allclose(hl_maximal(GridSampling(BOX, f)).values, _brute_hl(f), rtol=1e-14)

    def test_dominates(self, rng):
        f = rng.normal(size=(32, 32))
        assert np.all(hl_maximal(GridSampling(BOX, f)).values >= np.abs(f))

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            GridSampling(BOX, np.zeros((12, 12)))
        with pytest.raises(ValueError):
            GridSampling(BOX, np.full((8, 8), np.nan))


class TestSharp:
    def test_constant_zero(self):
        g = GridSampling(BOX, np.full((32, 32), 0.1))
        assert np.all(sharp_maximal_local(g, unit_square()).values == 0)

    def test_linear_scales_with_side(self):
        g = GridSampling.sample(lambda x: x[:, 0] + 2 * x[:, 1], BOX, 64)
        a = sharp_maximal_local(g, None, max_side=8).values
        b = sharp_maximal_local(g, None, max_side=4).values
        assert b.max() / a.max() == pytest.approx(0.5, rel=0.1)

    def test_bounded_by_twice_hl(self, rng):
        f = rng.normal(size=(32, 32))
        g = GridSampling(BOX, f)
        assert np.all(sharp_maximal_local(g, unit_square()).values <= 2 * hl_maximal(g).values + 1e-14)

    def test_squares_inside_polygon(self):
        from spfem.mesh import regular_polygon

        poly = regular_polygon(5, 0.5, (0.5, 0.5))
        ok = square_inside_mask(BOX, 16, 4, poly)
        assert ok.any() and not ok.all()


def test_green_gradient_bound_small():
    fam = refinement_family(structured_square(8), 3)
    src = [(0.3, 0.3), (0.7, 0.6)]
    obs = [(0.7, 0.2), (0.2, 0.75), (0.5, 0.9)]
    r = verify_green_gradient_bound(fam, src, obs, 0.2)
    assert len(r.trend) == 3
    assert max(r.extra["symmetry_error"]) < 1e-9
    # adding observers never lowers the sup
    r2 = verify_green_gradient_bound(fam, src, obs + [(0.9, 0.5)], 0.2)
    assert all(b >= a for a, b in zip(r.trend, r2.trend))


def test_green_separation_enforced():
    fam = refinement_family(structured_square(8), 3)
    with pytest.raises(ValueError):
        verify_green_gradient_bound(fam, [(0.5, 0.5)], [(0.52, 0.5)], 0.2)
    with pytest.raises(ValueError):
        verify_green_gradient_bound(fam, [(0.3, 0.3)], [(0.8, 0.8)], 0.01)


def test_gamma_grid_square():
    g = default_gamma_grid(unit_square())
    assert len(g) == 10 and g[0] == pytest.approx(0.05) and g[-1] == pytest.approx(0.95)


def test_holder_probe_runs():
    fam = refinement_family(structured_square(16), 3)
    y = np.array([0.5, 0.5])
    pairs = np.array([[[0.2, 0.5], [0.2, 0.6]], [[0.7, 0.75], [0.8, 0.7]]])
    r = verify_green_holder_bound(fam, y, pairs, [0.25, 0.5])
    assert np.all(np.isfinite(r.extra["table"]))
    assert len(holder_trend(r, 0.5)) == 3
    with pytest.raises(ValueError):
        verify_green_holder_bound(fam, y, np.array([[[0.2, 0.5], [0.2, 0.5]]]), [0.5])


def test_localization_probe():
    fam = refinement_family(structured_square(8), 3)
    r = verify_localization(fam, fields.grad_sinsin, [(0.3, 0.3), (0.6, 0.7)], [1.0, 2.0], quad_levels=2)
    tab = np.array(r.extra["table"])
    assert tab.shape == (3, 2) and np.all(np.isfinite(tab)) and np.all(tab > 0)


def test_localization_fe_function_bounded_by_local_term(rng):
    # u in V_h: |grad u_h(z)|^2 equals (local average)^2, so C_meas <= 1 for every lambda
    m = structured_square(8)
    v = rng.normal(size=m.n_vertices)
    v[m.boundary_flags] = 0
    u = FEFunction(m, v)
    r = verify_localization([m, m, m], u, [(0.3, 0.3), (0.61, 0.43)], [1.0, 3.0], quad_levels=1)
    h = m.h_max
    area_over_h2 = m.areas[0] / h**2
    assert np.max(r.extra["table"]) <= 1 / area_over_h2**2 + 1e-12


def test_sharp_lemma_zero_field():
    r = verify_sharp_maximal_lemma(fields.zero_field, 2.0, [16, 32, 64], structured_square(8))
    assert r.trend == [0.0, 0.0, 0.0]


def test_sharp_lemma_stable():
    m = refine_uniform(structured_square(16))
    r = verify_sharp_maximal_lemma(fields.grad_sinsin, 2.0, [32, 64, 128], m)
    assert r.last_change() < 0.3
    assert all(np.isfinite(r.trend))


def test_mean_oscillation_constant():
    g = GridSampling(BOX, np.full((32, 32), 4.0))
    assert verify_mean_oscillation_lemma(g, None, 2, unit_square()).measured_constant == 0.0


def test_mean_oscillation_linear_stable():
    vals = [verify_mean_oscillation_lemma(GridSampling.sample(lambda x: x[:, 0] - 3 * x[:, 1], BOX, n), None, 2,
                                          unit_square()).measured_constant for n in (64, 128)]
    assert abs(vals[1] - vals[0]) / vals[1] < 0.15


def test_mean_oscillation_jump_weighted():
    w = PowerWeight(1.0, FeatureSet(segments=((0.5, 0.0, 0.5, 1.0),)))
    g = GridSampling.sample(lambda x: (x[:, 0] > 0.5).astype(float), BOX, 64)
    r = verify_mean_oscillation_lemma(g, w, 2, unit_square())
    assert np.isfinite(r.measured_constant) and r.measured_constant > 0


def test_report_json():
    import json

    r = verify_sharp_maximal_lemma(fields.zero_field, 2.0, [16, 32, 64], structured_square(8))
    d = json.loads(r.to_json())
    assert {"name", "params", "measured_constant", "argmax", "trend"} <= set(d)
