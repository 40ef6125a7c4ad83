import numpy as np
import pytest

from spfem.probes import GridSampling
from spfem.weights import (
    Box,
    FeatureSet,
    PowerWeight,
    a1_constant_on_grid,
    ap_range,
    dual_weight,
    estimate_ap_constant,
    growth_factor,
    segment_distance,
)

ORIGIN = FeatureSet(points=((0.0, 0.0),))


def test_point_weight():
    assert PowerWeight(2, ORIGIN)(np.array([3.0, 4.0])) == pytest.approx(25.0)


def test_zero_exponent_is_one():
    w = PowerWeight(0, ORIGIN)
    assert np.all(w(np.array([[0.0, 0.0], [7.0, -1.0]])) == 1.0)


def test_segment_weight():
    w = PowerWeight(-1, FeatureSet(segments=((0, 0, 1, 0),)))
    assert w(np.array([0.5, 0.25])) == pytest.approx(4.0)


def test_weight_on_feature():
    assert PowerWeight(-1, ORIGIN)(np.zeros(2)) == np.inf
    assert PowerWeight(1, ORIGIN)(np.zeros(2)) == 0.0


def test_segment_distance_endpoints():
    d = segment_distance(np.array([[-3.0, 4.0], [2.0, 0.0], [0.3, -0.2]]), (0, 0), (1, 0))
    assert np.allclose(d, [5.0, 1.0, 0.2])


@pytest.mark.parametrize("lam,p,expected", [(1, 2, -1), (0, 2, 0), (3, 4, -1)])
def test_dual_weight(lam, p, expected):
    assert dual_weight(PowerWeight(lam, ORIGIN), p).lam == pytest.approx(expected)


def test_dual_weight_needs_p_above_one():
    with pytest.raises(ValueError):
        dual_weight(PowerWeight(1, ORIGIN), 1.0)


@pytest.mark.parametrize("n,k,p,interval", [(2, 0, 2, (-2, 2)), (2, 1, 2, (-1, 1)), (3, 1, 2, (-2, 2))])
def test_ap_range(n, k, p, interval):
    assert ap_range(n, k, p) == interval


def test_membership_flags():
    assert PowerWeight(-0.5, ORIGIN).in_a1()
    assert not PowerWeight(0.5, ORIGIN).in_a1()
    assert PowerWeight(1.9, ORIGIN).in_ap(2)
    assert not PowerWeight(2.0, ORIGIN).in_ap(2)


def test_feature_text_roundtrip():
    f = FeatureSet(points=((0.1, 0.2),), segments=((0.0, 0.5, 1.0, 0.5),))
    assert FeatureSet.from_text(f.to_text()) == f
    assert FeatureSet.from_text("point 0 0; segment 0 0 1 1").k == 1
    with pytest.raises(ValueError):
        FeatureSet.from_text("circle 0 0 1")


BOX = Box(-1.0, -1.0, 2.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
def test_ap_unweighted_exact(p):
    est = estimate_ap_constant(PowerWeight(0, ORIGIN), p, BOX, depth=5)
    assert est.value == 1.0
    assert est.by_depth == [1.0] * 6


def test_ap_in_range_plateaus():
    est = estimate_ap_constant(PowerWeight(1, ORIGIN), 2, BOX, depth=8)
    assert est.by_depth[8] / est.by_depth[6] < 1.5
    assert growth_factor(est, 3) < 1.1


def test_ap_out_of_range_grows():
    est = estimate_ap_constant(PowerWeight(2.5, ORIGIN), 2, BOX, depth=8)
    for d in range(4, 6):
        assert est.by_depth[d + 3] > 1.5 * est.by_depth[d]


def test_ap_endpoint_grows_slowly():
    # at lam = 2 the constant diverges only logarithmically: increments stay bounded below
    est = estimate_ap_constant(PowerWeight(2.0, ORIGIN), 2, BOX, depth=8)
    inc = np.diff(est.by_depth[3:])
    assert np.all(inc > 0.5)


def test_ap_segment_out_of_range():
    w = PowerWeight(1.5, FeatureSet(segments=((-0.5, 0.0, 0.5, 0.0),)))
    est = estimate_ap_constant(w, 2, BOX, depth=8)
    assert growth_factor(est) > 1.5


def test_ap_monotone_in_depth():
    est = estimate_ap_constant(PowerWeight(-1.2, ORIGIN), 2, BOX, depth=6)
    assert np.all(np.diff(est.by_depth) >= 0)


def test_ap_rejects_bad_args():
    w = PowerWeight(1, ORIGIN)
    with pytest.raises(ValueError):
        estimate_ap_constant(w, 1.0, BOX, 3)
    with pytest.raises(ValueError):
        estimate_ap_constant(w, 2.0, BOX, 3, samples_per_cube=5)


def test_a1_unweighted():
    g = GridSampling(BOX, np.ones((16, 16)))
    assert a1_constant_on_grid(g) == 1.0


def test_a1_inverse_distance_stable():
    w = PowerWeight(-1, ORIGIN)
    vals = [a1_constant_on_grid(GridSampling.sample(w.evaluate, BOX, n)) for n in (64, 128, 256)]
    assert min(vals) >= 1
    assert (max(vals) - min(vals)) / max(vals) < 0.2


def test_a1_positive_power_grows():
    w = PowerWeight(1, ORIGIN)
    vals = [a1_constant_on_grid(GridSampling.sample(w.evaluate, BOX, n)) for n in (64, 128, 256)]
    assert vals[0] < vals[1] < vals[2]
