"""Conforming triangulations of convex polygons: generation, red refinement, queries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    vertices: np.ndarray  # (m, 2), counterclockwise

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise MeshError("polygon needs at least 3 vertices in the plane")
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        scale = lengths.max()
        if np.any(lengths <= 1e-14 * scale):
            raise MeshError("degenerate polygon edge (repeated vertex)")
        cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(cross <= 1e-14 * scale**2):
            bad = int(np.argmin(cross)) + 1
            raise MeshError(
                f"polygon is not strictly convex and counterclockwise (turn at vertex {bad % len(v)} "
                f"has cross product {cross.min():.3e})"
            )
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @cached_property
    def interior_angles(self) -> np.ndarray:
        v = self.vertices
        a = np.roll(v, 1, axis=0) - v
        b = np.roll(v, -1, axis=0) - v
        cosang = np.einsum("ij,ij->i", a, b) / (np.hypot(*a.T) * np.hypot(*b.T))
        return np.arccos(np.clip(cosang, -1.0, 1.0))

    @cached_property
    def corner_exponents(self) -> np.ndarray:
        return np.pi / self.interior_angles

    @cached_property
    def area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @cached_property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    @cached_property
    def centroid(self) -> np.ndarray:
        x, y = self.vertices.T
        c = x * np.roll(y, -1) - np.roll(x, -1) * y
        a = 0.5 * c.sum()
        return np.array([((x + np.roll(x, -1)) * c).sum(), ((y + np.roll(y, -1)) * c).sum()]) / (6 * a)

    def signed_edge_distances(self, pts) -> np.ndarray:
        """Distance of each point to every edge line, positive inside. Shape (N, m)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.stack([-e[:, 1], e[:, 0]], axis=1) / np.hypot(*e.T)[:, None]  # inward normals
        return np.einsum("nmk,mk->nm", pts[:, None, :] - v[None, :, :], n)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        """Closed containment with absolute tolerance ``tol``."""
        return np.all(self.signed_edge_distances(pts) >= -tol, axis=1)

    def boundary_distance(self, pts) -> np.ndarray:
        return self.signed_edge_distances(pts).min(axis=1)

    def on_boundary(self, pts, tol: float | None = None) -> np.ndarray:
        if tol is None:
            tol = 1e-12 * self.diameter
        return np.abs(self.boundary_distance(pts)) <= tol

    def is_axis_aligned_square(self) -> bool:
        v = self.vertices
        if len(v) != 4:
            return False
        x0, y0 = v.min(axis=0)
        x1, y1 = v.max(axis=0)
        if not math.isclose(x1 - x0, y1 - y0, rel_tol=1e-14):
            return False
        corners = {(x0, y0), (x1, y0), (x1, y1), (x0, y1)}
        return {tuple(p) for p in v.tolist()} == corners


def unit_square() -> ConvexPolygon:
    return ConvexPolygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def regular_polygon(m: int, radius: float = 1.0, center=(0.0, 0.0)) -> ConvexPolygon:
    t = np.pi / 2 + 2 * np.pi * np.arange(m) / m
    return ConvexPolygon(np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)]))


def _edge_lengths(vertices, triangles):
    p = vertices[triangles]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    return np.sqrt((e**2).sum(-1))


def signed_areas(vertices, triangles) -> np.ndarray:
    p = vertices[triangles]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def _min_angles(vertices, triangles):
    p = vertices[triangles]
    angles = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        c = np.einsum("ij,ij->i", a, b) / (np.hypot(*a.T) * np.hypot(*b.T))
        angles.append(np.arccos(np.clip(c, -1, 1)))
    return np.min(angles, axis=0)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (M, 3) int, counterclockwise
    boundary_flags: np.ndarray  # (N,) bool
    generation: int = 0
    polygon: ConvexPolygon | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        b = np.ascontiguousarray(self.boundary_flags, dtype=bool)
        if v.ndim != 2 or v.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 3 or b.shape != (len(v),):
            raise MeshError("malformed mesh arrays")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle references a missing vertex")
        for a in (v, t, b):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_flags", b)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    @cached_property
    def diameters(self) -> np.ndarray:
        return _edge_lengths(self.vertices, self.triangles).max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters.max())

    @property
    def h_min(self) -> float:
        return float(self.diameters.min())

    @cached_property
    def min_angle(self) -> float:
        return float(_min_angles(self.vertices, self.triangles).min())

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique sorted edges (E, 2) and the triangle->edge map (M, 3).

        Local edge i joins local vertices i and i+1.
        """
        t = self.triangles
        raw = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        raw = np.sort(raw, axis=1)
        uniq, inverse = np.unique(raw, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1, 3)

    @cached_property
    def edge_counts(self) -> np.ndarray:
        _, t2e = self.edges
        return np.bincount(t2e.ravel(), minlength=len(self.edges[0]))

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        e, _ = self.edges
        return e[self.edge_counts == 1]

    @cached_property
    def gradients(self) -> np.ndarray:
        """Gradients of the three P1 basis functions on each triangle, shape (M, 3, 2)."""
        p = self.vertices[self.triangles]
        area2 = 2.0 * self.areas
        # grad phi_i = rot90(p_{i+2} - p_{i+1}) / (2|T|)
        g = np.empty((len(p), 3, 2))
        for i in range(3):
            d = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
            g[:, i, 0] = -d[:, 1] / area2
            g[:, i, 1] = d[:, 0] / area2
        return g

    def is_conforming(self) -> bool:
        counts = self.edge_counts
        if np.any((counts < 1) | (counts > 2)):
            return False
        # every vertex lying on another triangle's edge interior would be a hanging node
        be = self.boundary_edges
        if self.polygon is not None and len(be):
            mids = self.vertices[be].mean(axis=1)
            if not np.all(self.polygon.on_boundary(mids, tol=1e-9 * self.polygon.diameter)):
                return False
        return True

    # ----------------------------------------------------------- point location
    @cached_property
    def _locator(self):
        return _BucketLocator(self)

    def barycentric(self, t, z) -> np.ndarray:
        p = self.vertices[self.triangles[t]]
        z = np.asarray(z, dtype=float)
        return _bary(p, z)

    def locate(self, z) -> int:
        """Index of a triangle containing ``z``; the lowest index wins on shared edges/vertices."""
        return int(self.locate_many(np.asarray(z, dtype=float)[None, :])[0])

    def locate_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = self._locator.find(pts)
        missing = idx < 0
        if np.any(missing):
            bad = pts[np.argmax(missing)]
            raise MeshError(f"point ({bad[0]:.17g}, {bad[1]:.17g}) lies outside the meshed domain")
        return idx


def _bary(p, z):
    """Barycentric coordinates of z w.r.t. triangles p (..., 3, 2)."""
    a, b, c = p[..., 0, :], p[..., 1, :], p[..., 2, :]
    det = (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])
    l1 = ((z[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (z[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])) / det
    l2 = ((b[..., 0] - a[..., 0]) * (z[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (z[..., 0] - a[..., 0])) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


class _BucketLocator:
    """Uniform bucket grid over triangle bounding boxes."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        v = mesh.vertices
        self.lo = v.min(axis=0)
        hi = v.max(axis=0)
        self.diam = float(np.hypot(*(hi - self.lo)))
        self.tol = 1e-12 * self.diam
        nb = max(1, int(math.sqrt(mesh.n_triangles / 2)))
        self.nb = nb
        self.cell = (hi - self.lo) / nb
        self.cell[self.cell == 0] = 1.0
        p = v[mesh.triangles]
        bmin = np.floor((p.min(axis=1) - self.tol - self.lo) / self.cell).astype(int).clip(0, nb - 1)
        bmax = np.floor((p.max(axis=1) + self.tol - self.lo) / self.cell).astype(int).clip(0, nb - 1)
        buckets: list[list[int]] = [[] for _ in range(nb * nb)]
        for t in range(mesh.n_triangles):
            for i in range(bmin[t, 0], bmax[t, 0] + 1):
                for j in range(bmin[t, 1], bmax[t, 1] + 1):
                    buckets[i * nb + j].append(t)
        self.buckets = [np.array(b, dtype=np.int64) for b in buckets]

    def find(self, pts):
        out = np.full(len(pts), -1, dtype=np.int64)
        ij = np.floor((pts - self.lo) / self.cell).astype(int)
        inside_box = np.all((ij >= -1) & (ij <= self.nb), axis=1)
        ij = ij.clip(0, self.nb - 1)
        key = ij[:, 0] * self.nb + ij[:, 1]
        order = np.argsort(key, kind="stable")
        keys_sorted = key[order]
        starts = np.flatnonzero(np.r_[True, keys_sorted[1:] != keys_sorted[:-1]])
        ends = np.r_[starts[1:], len(order)]
        tris = self.mesh.triangles
        verts = self.mesh.vertices
        for s, e in zip(starts, ends):
            qi = order[s:e]
            qi = qi[inside_box[qi]]
            cand = self.buckets[keys_sorted[s]]
            if not len(qi) or not len(cand):
                continue
            p = verts[tris[cand]]  # (C, 3, 2)
            lam = _bary(p[None, :, :, :], pts[qi][:, None, :])  # (Q, C, 3)
            # tolerance in length units: barycentric * local height
            h = self.mesh.diameters[cand]
            ok = np.all(lam * h[None, :, None] >= -self.tol * 4, axis=2)
            has = ok.any(axis=1)
            first = np.argmax(ok, axis=1)  # cand sorted ascending -> lowest index
            out[qi[has]] = cand[first[has]]
        return out


# ------------------------------------------------------------------ generation
def triangulate_structured(polygon: ConvexPolygon, target_h: float) -> Mesh:
    """Quasi-uniform mesh with ``h_max <= target_h``.

    Axis-aligned squares get the N x N grid, each cell cut along its (0,0)-(1,1) diagonal.
    Any other convex polygon is fanned from its centroid and red-refined until fine enough.
    """
    if not target_h > 0:
        raise MeshError("target_h must be positive")
    if target_h >= polygon.diameter:
        raise MeshError(
            f"target_h={target_h:g} does not resolve the polygon (diameter {polygon.diameter:g})"
        )
    if polygon.is_axis_aligned_square():
        x0, y0 = polygon.vertices.min(axis=0)
        side = polygon.vertices[:, 0].max() - x0
        n = math.ceil(side * math.sqrt(2) / target_h * (1 - 1e-12))
        return structured_square(n, origin=(x0, y0), side=side, polygon=polygon)
    m = fan_mesh(polygon)
    while m.h_max > target_h:
        m = refine_uniform(m)
    return m


def structured_square(n: int, origin=(0.0, 0.0), side: float = 1.0, polygon: ConvexPolygon | None = None) -> Mesh:
    if n < 1:
        raise MeshError("need at least one cell per side")
    x0, y0 = origin
    s = np.arange(n + 1) / n
    X, Y = np.meshgrid(x0 + side * s, y0 + side * s, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    # exact endpoints
    verts[:, 0][np.arange(len(verts)) % (n + 1) == n] = x0 + side
    verts[:, 1][np.arange(len(verts)) // (n + 1) == n] = y0 + side
    j, i = np.divmod(np.arange(n * n), n)
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    ii, jj = np.divmod(np.arange(len(verts)), n + 1)
    bflags = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)
    if polygon is None:
        polygon = ConvexPolygon(np.array([[x0, y0], [x0 + side, y0], [x0 + side, y0 + side], [x0, y0 + side]]))
    return Mesh(verts, tris, bflags, generation=0, polygon=polygon)


def fan_mesh(polygon: ConvexPolygon) -> Mesh:
    v = polygon.vertices
    m = len(v)
    verts = np.vstack([v, polygon.centroid[None, :]])
    tris = np.column_stack([np.full(m, m), np.arange(m), (np.arange(m) + 1) % m])
    flags = np.r_[np.ones(m, bool), False]
    return Mesh(verts, tris, flags, generation=0, polygon=polygon)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle splits into 4 at edge midpoints.

    Children of triangle t are 4t..4t+3; old vertices keep their indices and the
    midpoint of unique edge e becomes vertex N + e.
    """
    edges, t2e = mesh.edges
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    flags = np.r_[mesh.boundary_flags, mesh.edge_counts == 1]
    a, b, c = mesh.triangles.T
    mab, mbc, mca = (nv + t2e).T
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(-1, 3)
    return Mesh(verts, children, flags, generation=mesh.generation + 1, polygon=mesh.polygon)


def refinement_family(mesh: Mesh, generations: int) -> list[Mesh]:
    out = [mesh]
    for _ in range(generations - 1):
        out.append(refine_uniform(out[-1]))
    return out


def quasi_uniformity_metrics(mesh: Mesh) -> tuple[float, float, float, float]:
    return mesh.h_max, mesh.h_min, mesh.h_max / mesh.h_min, mesh.min_angle


# ------------------------------------------------------------------------ I/O
def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"vertices {mesh.n_vertices} triangles {mesh.n_triangles}"]
    for (x, y), f in zip(mesh.vertices.tolist(), mesh.boundary_flags.tolist()):
        lines.append(f"{x:.17g} {y:.17g} {int(f)}")
    for i, j, k in mesh.triangles.tolist():
        lines.append(f"{i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, polygon: ConvexPolygon | None = None) -> Mesh:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "vertices" or header[2] != "triangles":
            raise MeshError(f"bad mesh header: {' '.join(header)!r}")
        nv, nt = int(header[1]), int(header[3])
        verts = np.empty((nv, 2))
        flags = np.empty(nv, dtype=bool)
        for i in range(nv):
            x, y, f = fh.readline().split()
            verts[i] = float(x), float(y)
            flags[i] = bool(int(f))
        tris = np.empty((nt, 3), dtype=np.int64)
        for i in range(nt):
            tris[i] = [int(s) for s in fh.readline().split()]
    return Mesh(verts, tris, flags, polygon=polygon)
