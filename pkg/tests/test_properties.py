"""Property-based checks of invariants that must hold for all inputs."""
import math

import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from spfem.fem import PointMass, full_load_vector
from spfem.mesh import refine_uniform, regular_polygon, triangulate_structured
from spfem.probes import GridSampling, hl_maximal, sharp_maximal_local
from spfem.weights import Box, FeatureSet, PowerWeight, ap_range, dual_weight

BOX = Box(0.0, 0.0, 1.0)
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
grids = st.sampled_from([8, 16]).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite))


@given(lam=st.floats(-5, 5), p=st.floats(1.1, 8))
def test_dual_of_dual_is_identity(lam, p):
    w = PowerWeight(lam, FeatureSet(points=((0.0, 0.0),)))
    q = p / (p - 1)
    assert math.isclose(dual_weight(dual_weight(w, p), q).lam, lam, rel_tol=1e-12, abs_tol=1e-12)


@given(k=st.integers(0, 1), p=st.floats(1.01, 10))
def test_ap_range_contains_zero(k, p):
    lo, hi = ap_range(2, k, p)
    assert lo < 0 < hi and math.isclose(hi, -lo * (p - 1))


@given(f=grids)
def test_hl_dominates(f):
    assert np.all(hl_maximal(GridSampling(BOX, f)).values >= np.abs(f))


@given(f=grids, extra=st.floats(0, 10))
def test_hl_monotone(f, extra):
    g = np.abs(f) + extra
    assert np.all(hl_maximal(GridSampling(BOX, np.abs(f))).values <= hl_maximal(GridSampling(BOX, g)).values)


@given(f=grids, e=st.integers(-6, 6), sign=st.sampled_from([-1.0, 1.0]))
def test_hl_homogeneous_dyadic(f, e, sign):
    c = sign * 2.0**e
    Mf = hl_maximal(GridSampling(BOX, f)).values
    assert np.array_equal(hl_maximal(GridSampling(BOX, c * f)).values, abs(c) * Mf)


@given(f=grids, c=finite)
def test_sharp_shift_invariant(f, c):
    a = sharp_maximal_local(GridSampling(BOX, f), None).values
    b = sharp_maximal_local(GridSampling(BOX, f + c), None).values
    assert np.allclose(a, b, atol=1e-9 * (1 + np.abs(f).max() + abs(c)))


@given(x=arrays(np.float64, (5, 2), elements=st.floats(-3, 3)),
       seg=arrays(np.float64, (4,), elements=st.floats(-2, 2)))
def test_segment_distance_bounds(x, seg):
    if seg[0] == seg[2] and seg[1] == seg[3]:
        return
    fs = FeatureSet(segments=(tuple(seg),))
    d = fs.distance(x)
    ends = np.minimum(np.hypot(*(x - seg[:2]).T), np.hypot(*(x - seg[2:]).T))
    assert np.all(d >= 0) and np.all(d <= ends + 1e-12)


@given(m=st.integers(3, 9), radius=st.floats(0.3, 3.0))
def test_mesh_area_and_conformity(m, radius):
    poly = regular_polygon(m, radius)
    mesh = triangulate_structured(poly, radius * 0.9)
    fine = refine_uniform(mesh)
    for me in (mesh, fine):
        assert me.is_conforming()
        assert math.isclose(me.areas.sum(), poly.area, rel_tol=1e-12)
    assert math.isclose(fine.min_angle, mesh.min_angle, rel_tol=1e-12)


@given(z=arrays(np.float64, (2,), elements=st.floats(-0.45, 0.45)), mass=st.floats(0.01, 100))
def test_point_mass_sums_to_mass(z, mass):
    mesh = triangulate_structured(regular_polygon(6, 1.0), 0.3)
    b = full_load_vector(mesh, PointMass(tuple(z), mass))
    assert math.isclose(math.fsum(b), mass, rel_tol=1e-14)
    assert np.all(b >= 0)
