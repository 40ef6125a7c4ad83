import math

import numpy as np
import pytest
import scipy.sparse as sp

from spfem import fields
from spfem.fem import (
    Density,
    DivField,
    FEFunction,
    LineMeasure,
    PointMass,
    SolverError,
    assemble_rhs,
    assemble_stiffness,
    dense_solve,
    element_stiffness,
    energy,
    full_load_vector,
    galerkin_project,
    pcg,
    point_gradient,
    relative_residual,
    solve,
    solve_cg,
    solve_dirichlet,
    stiffness,
)
from spfem.mesh import Mesh, MeshError, read_mesh, regular_polygon, structured_square, triangulate_structured, write_mesh
from spfem.quadrature import default_scheme, integrate


def test_reference_element_matrix():
    m = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), np.ones(3, bool))
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    assert np.allclose(element_stiffness(m)[0], expected, atol=1e-15)


def test_stiffness_symmetric_and_kernel():
    m = triangulate_structured(regular_polygon(7, 1.0), 0.25)
    s = assemble_stiffness(m)
    assert (s.full != s.full.T).nnz == 0
    assert np.abs(s.full @ np.ones(m.n_vertices)).max() < 1e-10


def test_degenerate_triangle_rejected():
    m = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]), np.ones(3, bool))
    with pytest.raises(MeshError):
        assemble_stiffness(m)


def test_p2_not_available():
    with pytest.raises(NotImplementedError):
        assemble_stiffness(structured_square(2), degree=2)


class TestSources:
    def test_point_mass_barycenter(self):
        m = structured_square(4)
        t = 5
        b = full_load_vector(m, PointMass(tuple(m.vertices[m.triangles[t]].mean(axis=0))))
        assert np.allclose(b[m.triangles[t]], 1 / 3)
        assert b.sum() == pytest.approx(1.0, abs=1e-14)

    def test_point_mass_at_vertex(self):
        m = structured_square(4)
        v = 12  # (0.5, 0.5)
        b = full_load_vector(m, PointMass(tuple(m.vertices[v]), mass=2.5))
        assert b[v] == 2.5 and np.count_nonzero(b) == 1

    def test_point_mass_partition_of_unity(self, rng):
        m = triangulate_structured(regular_polygon(5, 1.0), 0.2)
        for z in rng.uniform(-0.4, 0.4, size=(20, 2)):
            assert math.fsum(full_load_vector(m, PointMass(tuple(z), 0.7))) == pytest.approx(0.7, abs=1e-14)

    def test_point_mass_on_boundary_rejected(self):
        with pytest.raises(ValueError):
            assemble_rhs(structured_square(4), PointMass((0.0, 0.3)))

    def test_line_measure_total_mass(self):
        m = structured_square(8)
        b = full_load_vector(m, LineMeasure((0.2, 0.3, 0.77, 0.61), 2.0))
        length = math.hypot(0.57, 0.31)
        assert math.fsum(b) == pytest.approx(2.0 * length, rel=1e-13)

    def test_line_measure_linear_moment(self):
        # int_Gamma x ds = sum_i b_i x_i for P1 (x is in V_h)
        m = structured_square(8)
        seg = (0.1, 0.2, 0.9, 0.7)
        b = full_load_vector(m, LineMeasure(seg, 1.0))
        length = math.hypot(0.8, 0.5)
        assert b @ m.vertices[:, 0] == pytest.approx(0.5 * length, rel=1e-13)

    def test_line_measure_outside_rejected(self):
        with pytest.raises(ValueError):
            full_load_vector(structured_square(4), LineMeasure((0.5, 0.5, 1.5, 0.5)))

    def test_div_field_of_fe_function(self, rng):
        # q = grad s_h with s_h in V_h vanishing on the boundary: rhs = -K s_h exactly
        m = structured_square(8)
        s = rng.normal(size=m.n_vertices)
        s[m.boundary_flags] = 0
        sh = FEFunction(m, s)
        b = full_load_vector(m, DivField(sh.triangle_gradients()))
        assert np.allclose(b, -(stiffness(m).full @ s), atol=1e-12)

    def test_div_field_quadratic_sign(self):
        # s = x(1 - x): on the structured mesh the interior rows of K s_h reproduce int grad s . grad phi
        m = structured_square(8)
        s = lambda x: x[:, 0] * (1 - x[:, 0])
        grad = lambda x: np.column_stack([1 - 2 * x[:, 0], np.zeros(len(x))])
        b = assemble_rhs(m, DivField(grad, default_scheme(degree=4, levels=0)))
        ks = (stiffness(m).full @ s(m.vertices))[~m.boundary_flags]
        assert np.abs(b + ks).max() <= 1e-8
        assert np.all(b < 0)

    def test_constant_div_field_zero(self):
        m = triangulate_structured(regular_polygon(6, 1.0), 0.3)
        b = assemble_rhs(m, DivField(fields.constant_field))
        assert np.abs(b).max() < 1e-14

    def test_density_integrates_constant(self):
        m = structured_square(4)
        b = full_load_vector(m, Density(lambda x: np.full(len(x), 3.0)))
        assert math.fsum(b) == pytest.approx(3.0, rel=1e-14)


class TestSolver:
    def test_zero_rhs(self):
        x, info = pcg(stiffness(structured_square(4)).matrix, np.zeros(9))
        assert info.iterations == 0 and not x.any()

    def test_recovers_known_vector(self, rng):
        s = stiffness(structured_square(16))
        y = rng.normal(size=len(s.free))
        x, info = pcg(s.matrix, s.matrix @ y, rel_tol=1e-12)
        assert np.linalg.norm(x - y) / np.linalg.norm(y) < 1e-9
        assert info.residual <= 1e-12

    def test_nonconvergence_raises(self, rng):
        s = stiffness(structured_square(16))
        with pytest.raises(SolverError) as e:
            pcg(s.matrix, rng.normal(size=len(s.free)), max_iters=3)
        assert e.value.iterations == 3

    def test_maximum_principle_small_mesh(self):
        m = structured_square(2)
        u = solve(m, PointMass((0.5, 0.5)))
        interior = ~m.boundary_flags
        oracle = dense_solve(stiffness(m), assemble_rhs(m, PointMass((0.5, 0.5))))
        assert np.all(u.nodal_values[interior] > 0)
        assert np.allclose(u.nodal_values[interior], oracle, rtol=1e-12)
        assert u.nodal_values[interior][0] == pytest.approx(0.25, rel=1e-12)

    def test_residual_reported(self):
        m = structured_square(16)
        rhs = assemble_rhs(m, PointMass((0.3, 0.6)))
        u = solve_cg(stiffness(m), rhs, 1e-11)
        assert relative_residual(stiffness(m), u, rhs) <= 1e-11

    def test_dirichlet_reproduces_harmonic(self):
        m = triangulate_structured(regular_polygon(5, 1.0), 0.2)
        f = lambda x: 2 * x[:, 0] - 3 * x[:, 1] + 1
        u = solve_dirichlet(m, f, rel_tol=1e-13)
        assert np.abs(u.nodal_values - f(m.vertices)).max() < 1e-10


class TestGalerkin:
    def test_identity_on_vh(self, rng):
        m = triangulate_structured(regular_polygon(6, 1.0), 0.2)
        v = rng.normal(size=m.n_vertices)
        v[m.boundary_flags] = 0
        u0 = FEFunction(m, v)
        u = galerkin_project(m, u0.triangle_gradients(), rel_tol=1e-13)
        assert np.abs(u.nodal_values - v).max() <= 1e-9

    def test_zero(self):
        m = structured_square(4)
        assert not galerkin_project(m, fields.zero_field).nodal_values.any()

    def test_first_order_rate(self):
        scheme = default_scheme(None, 0, 6)
        errs = []
        for n in (8, 16, 32, 64):
            m = structured_square(n)
            g = galerkin_project(m, fields.grad_sinsin, scheme=scheme, rel_tol=1e-12).triangle_gradients()
            errs.append(integrate(m, scheme, lambda x, t: ((fields.grad_sinsin(x) - g[t]) ** 2).sum(1)) ** 0.5)
        ratios = np.array(errs[1:]) / np.array(errs[:-1])
        assert np.all((ratios >= 0.45) & (ratios <= 0.55))

    def test_orthogonality(self, rng):
        m = structured_square(16)
        scheme = default_scheme(None, 0, 6)
        u = galerkin_project(m, fields.grad_sinsin, scheme=scheme, rel_tol=1e-13)
        gu = u.triangle_gradients()
        ref = integrate(m, scheme, lambda x, t: (fields.grad_sinsin(x) ** 2).sum(1))
        for _ in range(10):
            v = rng.normal(size=m.n_vertices)
            v[m.boundary_flags] = 0
            gv = FEFunction(m, v).triangle_gradients()
            val = integrate(m, scheme, lambda x, t: ((fields.grad_sinsin(x) - gu[t]) * gv[t]).sum(1))
            scale = math.sqrt(ref * energy(FEFunction(m, v)))
            assert abs(val) <= 1e-8 * scale

    def test_energy_minimal(self):
        m = structured_square(8)
        scheme = default_scheme(None, 0, 6)
        u = galerkin_project(m, fields.grad_sinsin, scheme=scheme, rel_tol=1e-13)
        exact = integrate(m, scheme, lambda x, t: (fields.grad_sinsin(x) ** 2).sum(1))
        assert energy(u) <= exact


def test_green_symmetry():
    m = structured_square(16)
    ys = [(0.3, 0.3), (0.7, 0.45), (0.2, 0.8)]
    G = [solve(m, PointMass(y), 1e-13) for y in ys]
    V = np.array([g(np.array(ys)) for g in G])
    assert np.abs(V - V.T).max() <= 1e-9 * np.abs(V).max()


class TestPointGradient:
    def test_linear(self):
        m = structured_square(4)
        u = FEFunction(m, m.vertices[:, 0].copy())
        assert np.allclose(point_gradient(u, (0.3, 0.7)), [1, 0])

    def test_zero(self):
        m = structured_square(4)
        assert not point_gradient(FEFunction(m, np.zeros(m.n_vertices)), (0.5, 0.5)).any()

    def test_edge_tie_break(self, rng):
        m = structured_square(4)
        u = FEFunction(m, rng.normal(size=m.n_vertices))
        z = (0.125, 0.125)  # on the diagonal shared by triangles 0 and 1
        assert np.array_equal(point_gradient(u, z), u.triangle_gradients()[0])


def test_fefunction_roundtrip(tmp_path, rng):
    m = structured_square(4)
    write_mesh(m, tmp_path / "mesh.txt")
    u = FEFunction(m, rng.normal(size=m.n_vertices))
    u.write(tmp_path / "u.txt", "mesh.txt")
    r = FEFunction.read(tmp_path / "u.txt")
    assert np.array_equal(r.nodal_values, u.nodal_values)
    assert np.array_equal(r.mesh.triangles, read_mesh(tmp_path / "mesh.txt").triangles)


def test_fefunction_length_checked():
    with pytest.raises(ValueError):
        FEFunction(structured_square(2), np.zeros(3))
