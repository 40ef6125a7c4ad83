import math

import numpy as np
import pytest

from spfem.fem import FEFunction, energy
from spfem.mesh import structured_square, triangulate_structured, regular_polygon
from spfem.quadrature import (
    GradedScheme,
    default_scheme,
    integrate,
    segment_rule,
    triangle_rule,
    weighted_field_norm,
    weighted_norm,
    weighted_seminorm,
)
from spfem.weights import FeatureSet, PowerWeight

# Independent oracles: adaptive scipy.integrate.dblquad on the square (abs/rel tol 1e-14),
# cross-checked against the closed forms (sqrt 2 + asinh 1)/3, 2 asinh 1, and
# sqrt((sqrt 2 + asinh 1)/6).
ORACLE_DIST = 0.7651957164642129
ORACLE_INV_DIST = 1.7627471740390863
ORACLE_CENTER_NORM = 0.6185449524748363

ORIGIN = FeatureSet(points=((0.0, 0.0),))
CENTER = FeatureSet(points=((0.5, 0.5),))


def _monomial_integral(a, b):
    # int over reference triangle of x^a y^b = a! b! / (a + b + 2)!
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def test_centroid_rule():
    r = triangle_rule(1)
    assert r.weights.tolist() == [1.0]
    assert np.allclose(r.nodes, 1 / 3)


def test_degree_two_rule_interior():
    r = triangle_rule(2)
    assert len(r.weights) == 3
    assert np.allclose(np.sort(r.nodes, axis=1), [[1 / 6, 1 / 6, 2 / 3]] * 3)


@pytest.mark.parametrize("degree", range(1, 11))
def test_triangle_rules_exact(degree):
    r = triangle_rule(degree)
    assert np.all(r.weights > 0) and np.all(r.nodes > 0)
    assert r.weights.sum() == pytest.approx(1.0, abs=1e-14)
    # nodes are barycentric; map to reference triangle (0,0),(1,0),(0,1)
    x, y = r.nodes[:, 1], r.nodes[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            q = 0.5 * np.sum(r.weights * x**a * y**b)
            assert q == pytest.approx(_monomial_integral(a, b), rel=1e-12), (a, b)


def test_x2y_is_one_sixtieth():
    r = triangle_rule(3)
    x, y = r.nodes[:, 1], r.nodes[:, 2]
    assert 0.5 * np.sum(r.weights * x**2 * y) == pytest.approx(1 / 60, rel=1e-14)


def test_triangle_rule_bounds():
    with pytest.raises(ValueError):
        triangle_rule(0)
    with pytest.raises(ValueError):
        triangle_rule(11)


def test_segment_rules():
    assert segment_rule(1).nodes.tolist() == [0.5]
    r = segment_rule(3)
    assert np.allclose(np.sort(r.nodes), [(3 - math.sqrt(3)) / 6, (3 + math.sqrt(3)) / 6])
    assert np.sum(r.weights * r.nodes**3) == pytest.approx(0.25, rel=1e-14)


def test_unweighted_seminorm_is_one():
    m = structured_square(4)
    u = FEFunction.interpolate(m, lambda x: x[:, 0])
    assert weighted_seminorm(u, None, 2, default_scheme()).value == pytest.approx(1.0, rel=1e-14)


@pytest.mark.parametrize("lam,oracle", [(1, ORACLE_DIST), (-1, ORACLE_INV_DIST)])
def test_weighted_seminorm_oracle(lam, oracle):
    m = structured_square(8)
    u = FEFunction.interpolate(m, lambda x: x[:, 0])
    r = weighted_seminorm(u, PowerWeight(lam, ORIGIN), 2, default_scheme(ORIGIN))
    assert r.value**2 == pytest.approx(oracle, rel=1e-3)
    assert r.diagnostic < 0.01


def test_weighted_norm_oracle():
    m = structured_square(8)
    one = FEFunction.interpolate(m, lambda x: np.ones(len(x)))
    assert weighted_norm(one, None, 2, default_scheme()).value == pytest.approx(1.0, rel=1e-14)
    r = weighted_norm(one, PowerWeight(1, CENTER), 2, default_scheme(CENTER))
    assert r.value == pytest.approx(ORACLE_CENTER_NORM, rel=1e-3)


def test_zero_function_zero_norm():
    m = structured_square(4)
    z = FEFunction(m, np.zeros(m.n_vertices))
    assert weighted_norm(z, PowerWeight(1, CENTER), 2, default_scheme(CENTER)).value == 0.0


def test_seminorm_matches_stiffness_form(rng):
    m = triangulate_structured(regular_polygon(6, 1.0), 0.3)
    u = FEFunction(m, rng.normal(size=m.n_vertices))
    s = weighted_seminorm(u, None, 2, default_scheme()).value
    assert s**2 == pytest.approx(energy(u), rel=1e-10)


def test_grading_refines_only_near_target():
    m = structured_square(4)
    plain = GradedScheme(triangle_rule(4), 0, ORIGIN).points(m)
    graded = GradedScheme(triangle_rule(4), 3, ORIGIN).points(m)
    assert len(graded.w) > len(plain.w)
    assert math.fsum(graded.w) == pytest.approx(1.0, abs=1e-14)
    far = m.locate((0.9, 0.9))
    assert np.sum(graded.tri == far) == np.sum(plain.tri == far)


def test_integrate_rejects_nonfinite():
    m = structured_square(2)  # the square's corner node is a vertex, not a quadrature node
    with pytest.raises(FloatingPointError):
        integrate(m, default_scheme(), lambda x, t: np.full(len(x), np.nan))


def test_field_norm_constant():
    m = structured_square(4)
    r = weighted_field_norm(lambda x: np.tile([3.0, 4.0], (len(x), 1)), None, 2, default_scheme(), m)
    assert r.value == pytest.approx(5.0, rel=1e-14)
