"""P1 Lagrange elements for the Dirichlet Poisson problem with measure-valued sources."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, MeshError, _bary
from .quadrature import GradedScheme, default_scheme, segment_rule


class SolverError(RuntimeError):
    def __init__(self, msg, residual=None, iterations=None):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


def _check_degree(degree):
    if degree != 1:
        raise NotImplementedError("only P1 elements are implemented")


@dataclass(eq=False)
class FEFunction:
    mesh: Mesh
    nodal_values: np.ndarray
    degree: int = 1
    info: "CGInfo | None" = field(default=None, repr=False)

    def __post_init__(self):
        _check_degree(self.degree)
        self.nodal_values = np.asarray(self.nodal_values, dtype=float)
        if self.nodal_values.shape != (self.mesh.n_vertices,):
            raise ValueError("nodal vector length does not match the mesh")

    @classmethod
    def interpolate(cls, mesh: Mesh, f: Callable) -> "FEFunction":
        return cls(mesh, np.asarray(f(mesh.vertices), dtype=float))

    def triangle_gradients(self) -> np.ndarray:
        """Constant gradient on each triangle, (M, 2)."""
        return np.einsum("mi,mik->mk", self.nodal_values[self.mesh.triangles], self.mesh.gradients)

    def evaluate_in(self, x, tri) -> np.ndarray:
        p = self.mesh.vertices[self.mesh.triangles[tri]]
        lam = _bary(p, np.asarray(x, dtype=float))
        return np.einsum("ni,ni->n", lam, self.nodal_values[self.mesh.triangles[tri]])

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.evaluate_in(x, self.mesh.locate_many(x))

    def gradient_at(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.triangle_gradients()[self.mesh.locate_many(x)]

    def __add__(self, other):
        return FEFunction(self.mesh, self.nodal_values + other.nodal_values)

    def __sub__(self, other):
        return FEFunction(self.mesh, self.nodal_values - other.nodal_values)

    def __mul__(self, c):
        return FEFunction(self.mesh, c * self.nodal_values)

    __rmul__ = __mul__

    def write(self, path, mesh_path) -> None:
        lines = [f"mesh {mesh_path}", f"degree {self.degree}", f"values {len(self.nodal_values)}"]
        lines += [f"{v:.17g}" for v in self.nodal_values.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path, mesh: Mesh | None = None) -> "FEFunction":
        from .mesh import read_mesh

        lines = Path(path).read_text().splitlines()
        mesh_ref = lines[0].split(maxsplit=1)[1]
        degree = int(lines[1].split()[1])
        n = int(lines[2].split()[1])
        vals = np.array([float(s) for s in lines[3:3 + n]])
        if mesh is None:
            mesh = read_mesh(Path(path).parent / mesh_ref)
        return cls(mesh, vals, degree)


# ------------------------------------------------------------------ assembly
@dataclass(eq=False)
class SparseSystem:
    matrix: sp.csr_matrix  # reduced to free nodes
    free: np.ndarray  # free-node -> mesh vertex index
    full: sp.csr_matrix = field(repr=False)  # pre-elimination stiffness
    mesh: Mesh = field(repr=False)

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return v[self.free]

    def extend(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.mesh.n_vertices)
        out[self.free] = x
        return out


def element_stiffness(mesh: Mesh) -> np.ndarray:
    g = mesh.gradients
    return mesh.areas[:, None, None] * np.einsum("mik,mjk->mij", g, g)


def assemble_stiffness(mesh: Mesh, degree: int = 1) -> SparseSystem:
    _check_degree(degree)
    if np.any(mesh.areas <= 0):
        bad = int(np.argmin(mesh.areas))
        raise MeshError(f"triangle {bad} is degenerate or clockwise (area {mesh.areas[bad]:.3e})")
    ke = element_stiffness(mesh)
    ke = 0.5 * (ke + ke.transpose(0, 2, 1))
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    full = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    full.sum_duplicates()
    full.sort_indices()
    free = np.flatnonzero(~mesh.boundary_flags)
    reduced = full[free][:, free].tocsr()
    reduced.sort_indices()
    return SparseSystem(reduced, free, full, mesh)


_system_cache: dict[int, tuple[Mesh, SparseSystem]] = {}


def stiffness(mesh: Mesh) -> SparseSystem:
    """Cached ``assemble_stiffness`` (meshes are immutable)."""
    hit = _system_cache.get(id(mesh))
    if hit is not None and hit[0] is mesh:
        return hit[1]
    s = assemble_stiffness(mesh)
    if len(_system_cache) > 8:
        _system_cache.clear()
    _system_cache[id(mesh)] = (mesh, s)
    return s


# ------------------------------------------------------------------- sources
@dataclass(frozen=True)
class PointMass:
    location: tuple[float, float]
    mass: float = 1.0


@dataclass(frozen=True)
class LineMeasure:
    segment: tuple[float, float, float, float]
    density: Callable | float = 1.0
    quad_degree: int = 5


@dataclass(frozen=True)
class DivField:
    """div q; ``q`` maps points (N, 2) -> (N, 2), or is an (M, 2) per-triangle array."""

    q: Callable | np.ndarray
    scheme: GradedScheme | None = None


@dataclass(frozen=True)
class Density:
    f: Callable
    scheme: GradedScheme | None = None


SourceTerm = Union[PointMass, LineMeasure, DivField, Density]


def full_load_vector(mesh: Mesh, source: SourceTerm, degree: int = 1) -> np.ndarray:
    """Load vector over all mesh vertices (before Dirichlet elimination)."""
    _check_degree(degree)
    n = mesh.n_vertices
    if isinstance(source, PointMass):
        z = np.asarray(source.location, dtype=float)
        poly = mesh.polygon
        if poly is not None and not np.all(poly.signed_edge_distances(z[None])[0] > 0):
            raise ValueError(f"point mass at {tuple(z)} is not strictly inside the domain")
        t = mesh.locate(z)
        lam = np.clip(mesh.barycentric(t, z), 0.0, None)
        lam = lam / lam.sum()
        b = np.zeros(n)
        np.add.at(b, mesh.triangles[t], source.mass * lam)
        return b
    if isinstance(source, LineMeasure):
        return _line_load(mesh, source)
    if isinstance(source, DivField):
        g = mesh.gradients
        if callable(source.q):
            scheme = source.scheme or default_scheme(levels=0)
            qp = scheme.points(mesh)
            qv = np.asarray(source.q(qp.x), dtype=float)
            # sum_q w q . grad phi_i   per local vertex
            contrib = np.einsum("n,nk,nik->ni", qp.w, qv, g[qp.tri])
            tri = qp.tri
        else:
            qv = np.asarray(source.q, dtype=float)
            contrib = mesh.areas[:, None] * np.einsum("mk,mik->mi", qv, g)
            tri = np.arange(mesh.n_triangles)
        b = np.zeros(n)
        np.add.at(b, mesh.triangles[tri].ravel(), -contrib.ravel())
        return b
    if isinstance(source, Density):
        scheme = source.scheme or default_scheme(levels=0)
        qp = scheme.points(mesh)
        p = mesh.vertices[mesh.triangles[qp.tri]]
        lam = _bary(p, qp.x)
        fv = np.asarray(source.f(qp.x), dtype=float)
        b = np.zeros(n)
        np.add.at(b, mesh.triangles[qp.tri].ravel(), ((qp.w * fv)[:, None] * lam).ravel())
        return b
    raise TypeError(f"unknown source term {source!r}")


def _segment_breakpoints(mesh: Mesh, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Parameters in [0, 1] where segment a->b crosses mesh edges."""
    edges, _ = mesh.edges
    p = mesh.vertices[edges[:, 0]]
    q = mesh.vertices[edges[:, 1]]
    d = b - a
    e = q - p
    den = d[0] * e[:, 1] - d[1] * e[:, 0]
    ok = np.abs(den) > 1e-14 * np.hypot(*d) * np.hypot(e[:, 0], e[:, 1])
    r = p - a
    t = np.where(ok, (r[:, 0] * e[:, 1] - r[:, 1] * e[:, 0]) / np.where(ok, den, 1), -1)
    s = np.where(ok, (r[:, 0] * d[1] - r[:, 1] * d[0]) / np.where(ok, den, 1), -1)
    hit = ok & (t > 0) & (t < 1) & (s >= -1e-12) & (s <= 1 + 1e-12)
    return np.unique(np.r_[0.0, t[hit], 1.0])


def _line_load(mesh: Mesh, src: LineMeasure) -> np.ndarray:
    a = np.asarray(src.segment[:2], dtype=float)
    b = np.asarray(src.segment[2:], dtype=float)
    poly = mesh.polygon
    if poly is not None and not np.all(poly.contains(np.array([a, b]), tol=1e-12 * poly.diameter)):
        raise ValueError(f"line measure {src.segment} leaves the domain")
    length = float(np.hypot(*(b - a)))
    br = _segment_breakpoints(mesh, a, b)
    br = br[np.r_[True, np.diff(br) > 1e-13]]
    rule = segment_rule(src.quad_degree)
    t0, t1 = br[:-1], br[1:]
    tm = 0.5 * (t0 + t1)
    tri = mesh.locate_many(a[None] + tm[:, None] * (b - a)[None])
    s = t0[:, None] + (t1 - t0)[:, None] * rule.nodes[None, :]  # (pieces, q)
    x = a[None, None, :] + s[..., None] * (b - a)[None, None, :]
    wq = (t1 - t0)[:, None] * rule.weights[None, :] * length
    g = src.density(x.reshape(-1, 2)).reshape(s.shape) if callable(src.density) else np.full(s.shape, float(src.density))
    trq = np.repeat(tri, len(rule.weights))
    p = mesh.vertices[mesh.triangles[trq]]
    lam = _bary(p, x.reshape(-1, 2))
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles[trq].ravel(), ((wq * g).ravel()[:, None] * lam).ravel())
    return out


def assemble_rhs(mesh: Mesh, source: SourceTerm, degree: int = 1) -> np.ndarray:
    """Load vector restricted to free (interior) nodes."""
    return full_load_vector(mesh, source, degree)[~mesh.boundary_flags]


# -------------------------------------------------------------------- solver
@dataclass
class CGInfo:
    iterations: int
    residual: float


def pcg(A, b, rel_tol=1e-10, max_iters=None, diag=None, x0=None):
    """Jacobi-preconditioned conjugate gradients; returns (x, CGInfo)."""
    n = len(b)
    if max_iters is None:
        max_iters = max(10 * n, 100)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0:
        return np.zeros(n), CGInfo(0, 0.0)
    dinv = 1.0 / (A.diagonal() if diag is None else diag)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / bnorm
    it = 0
    while res > rel_tol:
        if it >= max_iters:
            raise SolverError(f"CG did not converge in {max_iters} iterations (relative residual {res:.3e})",
                              residual=res, iterations=it)
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = float(np.linalg.norm(r)) / bnorm
        z = dinv * r
        rz_new = float(r @ z)
        p *= rz_new / rz
        p += z
        rz = rz_new
    # guard against drift of the recursive residual
    true_res = float(np.linalg.norm(b - A @ x)) / bnorm
    if true_res > 10 * rel_tol and true_res > 1e-15:
        x, info = pcg(A, b, rel_tol, max_iters, diag, x0=x)
        return x, CGInfo(it + info.iterations, info.residual)
    return x, CGInfo(it, true_res)


def solve_cg(system: SparseSystem, rhs, rel_tol: float = 1e-10, max_iters: int | None = None) -> FEFunction:
    x, info = pcg(system.matrix, np.asarray(rhs, dtype=float), rel_tol, max_iters, system.diagonal)
    return FEFunction(system.mesh, system.extend(x), info=info)


def solve(mesh: Mesh, source: SourceTerm, rel_tol: float = 1e-10) -> FEFunction:
    return solve_cg(stiffness(mesh), assemble_rhs(mesh, source), rel_tol)


def solve_dirichlet(mesh: Mesh, boundary_values: Callable, source: SourceTerm | None = None,
                    rel_tol: float = 1e-10) -> FEFunction:
    """-Laplace u = source with u = interpolant of ``boundary_values`` on the boundary."""
    sys_ = stiffness(mesh)
    bnd = mesh.boundary_flags
    g = np.zeros(mesh.n_vertices)
    g[bnd] = np.asarray(boundary_values(mesh.vertices[bnd]), dtype=float)
    rhs = -(sys_.full @ g)[sys_.free]
    if source is not None:
        rhs = rhs + assemble_rhs(mesh, source)
    x, info = pcg(sys_.matrix, rhs, rel_tol, None, sys_.diagonal)
    vals = g.copy()
    vals[sys_.free] = x
    return FEFunction(mesh, vals, info=info)


def galerkin_project(mesh: Mesh, grad_u, degree: int = 1, scheme: GradedScheme | None = None,
                     rel_tol: float = 1e-10) -> FEFunction:
    """Ritz projection: int grad u_h . grad v = int grad u . grad v for all v in V_h.

    ``grad_u`` is a callable x -> (N, 2) or an (M, 2) per-triangle array.
    """
    _check_degree(degree)
    # the DivField load is -int q . grad phi; flip the sign to get +int grad u . grad phi
    b = -assemble_rhs(mesh, DivField(grad_u, scheme), degree)
    return solve_cg(stiffness(mesh), b, rel_tol)


def point_gradient(u_h: FEFunction, z) -> np.ndarray:
    """Gradient of u_h on triangle ``locate(z)`` (lowest index on shared edges)."""
    return u_h.triangle_gradients()[u_h.mesh.locate(z)]


def energy(u: FEFunction) -> float:
    """Stiffness quadratic form u^T K u."""
    k = stiffness(u.mesh).full
    return float(u.nodal_values @ (k @ u.nodal_values))


def discrete_green(mesh: Mesh, y, rel_tol: float = 1e-12) -> FEFunction:
    return solve(mesh, PointMass(tuple(map(float, y))), rel_tol)


def dense_solve(system: SparseSystem, rhs) -> np.ndarray:
    return np.linalg.solve(system.matrix.toarray(), rhs)


def relative_residual(system: SparseSystem, u: FEFunction, rhs) -> float:
    r = system.matrix @ u.nodal_values[system.free] - rhs
    return float(np.linalg.norm(r) / max(np.linalg.norm(rhs), math.ulp(1.0)))
