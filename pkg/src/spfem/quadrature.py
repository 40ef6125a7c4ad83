"""Triangle/segment rules, grading toward a feature set, and weighted L^p norms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .weights import FeatureSet, PowerWeight, segment_distance


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray  # barycentric (q, 3) on triangles, (q,) in [0, 1] on segments
    weights: np.ndarray  # sum to 1
    exactness_degree: int


def _orbit(weight, a=None, b=None):
    """Symmetric orbit: centroid, (a, a, 1-2a) or (a, b, 1-a-b)."""
    if a is None:
        return [(1 / 3, 1 / 3, 1 / 3)], [weight]
    if b is None:
        pts = {(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)}
    else:
        pts = set(permutations((a, b, 1 - a - b)))
    pts = sorted(pts)
    return pts, [weight] * len(pts)


def _assemble(*orbits):
    nodes, weights = [], []
    for pts, ws in orbits:
        nodes += pts
        weights += ws
    return np.array(nodes), np.array(weights)


def _collapsed_rule(degree: int):
    """Symmetrised collapsed Gauss-Jacobi rule: exact to ``degree``, positive, interior."""
    m = (degree + 2) // 2
    s, ws = roots_jacobi(m, 1.0, 0.0)  # weight (1 - s) absorbs the collapse Jacobian
    t, wt = roots_jacobi(m, 0.0, 0.0)
    u = (1 + s) / 2  # x in [0,1], density (1-u)
    v = (1 + t) / 2
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(ws, wt)
    x = U.ravel()
    y = ((1 - U) * V).ravel()
    w = W.ravel() / W.sum()
    bary = np.column_stack([1 - x - y, x, y])
    nodes = np.vstack([bary[:, list(p)] for p in permutations(range(3))])
    weights = np.tile(w, 6) / 6
    return nodes, weights


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Symmetric positive-weight rule with interior nodes, exact for polynomials of ``degree``."""
    if not 1 <= degree <= 10:
        raise ValueError(f"triangle rule degree must lie in 1..10, got {degree}")
    if degree == 1:
        nodes, weights = _assemble(_orbit(1.0))
        exact = 1
    elif degree == 2:
        nodes, weights = _assemble(_orbit(1 / 3, 1 / 6))
        exact = 2
    elif degree <= 4:
        nodes, weights = _assemble(
            _orbit(0.223381589678011065756, 0.445948490915964886319),
            _orbit(0.109951743655321600911, 0.091576213509770743460),
        )
        exact = 4
    elif degree == 5:
        r = math.sqrt(15)
        nodes, weights = _assemble(
            _orbit(9 / 40),
            _orbit((155 - r) / 1200, (6 - r) / 21),
            _orbit((155 + r) / 1200, (6 + r) / 21),
        )
        exact = 5
    else:
        nodes, weights = _collapsed_rule(degree)
        exact = degree
    weights = weights / weights.sum()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights, exact)


@lru_cache(maxsize=None)
def segment_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre on [0, 1] with ceil((degree + 1) / 2) nodes."""
    if not 1 <= degree <= 41:
        raise ValueError(f"segment rule degree must lie in 1..41, got {degree}")
    n = (degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = (x + 1) / 2
    weights = w / 2
    return QuadratureRule(nodes, weights, 2 * n - 1)


# ------------------------------------------------------------------ grading
def _tri_feature_distance(p: np.ndarray, features: FeatureSet) -> np.ndarray:
    """Distance from each triangle p (M, 3, 2) to the feature set; 0 on intersection."""
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    d = np.full(len(p), np.inf)

    def inside(q):
        # q (M, 2) or broadcastable
        def side(u, v):
            return (v[..., 0] - u[..., 0]) * (q[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (q[..., 0] - u[..., 0])

        return (side(a, b) >= 0) & (side(b, c) >= 0) & (side(c, a) >= 0)

    def point_to_edges(q):
        return np.minimum.reduce([segment_distance(q, a.T, b.T), segment_distance(q, b.T, c.T),
                                  segment_distance(q, c.T, a.T)])

    for px, py in features.points:
        q = np.broadcast_to(np.array([px, py]), (len(p), 2))
        dist = np.where(inside(q), 0.0, point_to_edges(q))
        d = np.minimum(d, dist)
    for s in features.segments:
        s0 = np.broadcast_to(np.array(s[:2]), (len(p), 2))
        s1 = np.broadcast_to(np.array(s[2:]), (len(p), 2))
        dist = np.minimum(point_to_edges(s0), point_to_edges(s1))
        dist = np.where(inside(s0) | inside(s1), 0.0, dist)
        for v in (a, b, c):
            dist = np.minimum(dist, segment_distance(v, s[:2], s[2:]))
        # proper crossings of the segment with triangle edges
        for u, v in ((a, b), (b, c), (c, a)):
            dist = np.where(_segments_cross(u, v, s0, s1), 0.0, dist)
        d = np.minimum(d, dist)
    return d


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def _split4(p):
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.stack(
        [np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1), np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)], 1
    ).reshape(-1, 3, 2)


@dataclass(frozen=True)
class QuadPoints:
    x: np.ndarray  # (N, 2)
    w: np.ndarray  # (N,) physical weights
    tri: np.ndarray  # (N,) owning mesh triangle


@dataclass(frozen=True, eq=False)
class GradedScheme:
    """Base rule on every leaf; leaves near ``grading_target`` are quartered ``levels`` times.

    A (sub)triangle is split when its distance to the target is below its diameter.
    """

    base_rule: QuadratureRule = field(default_factory=lambda: triangle_rule(4))
    levels: int = 6
    grading_target: FeatureSet | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("levels must be >= 0")

    def coarser(self) -> "GradedScheme":
        return GradedScheme(self.base_rule, max(self.levels - 1, 0), self.grading_target)

    def points(self, mesh) -> QuadPoints:
        key = id(mesh)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is mesh:
            return hit[1]
        qp = self._build(mesh)
        self._cache.clear()
        self._cache[key] = (mesh, qp)
        return qp

    def _build(self, mesh) -> QuadPoints:
        tris = mesh.vertices[mesh.triangles]
        owner = np.arange(len(tris))
        leaves, leaf_owner = [], []
        for _ in range(self.levels if self.grading_target is not None else 0):
            diam = np.sqrt(((tris - np.roll(tris, -1, axis=1)) ** 2).sum(-1)).max(axis=1)
            near = _tri_feature_distance(tris, self.grading_target) < diam
            leaves.append(tris[~near])
            leaf_owner.append(owner[~near])
            if not near.any():
                tris = tris[:0]
                break
            tris = _split4(tris[near])
            owner = np.repeat(owner[near], 4)
        leaves.append(tris)
        leaf_owner.append(owner)
        tris = np.concatenate(leaves)
        owner = np.concatenate(leaf_owner)
        order = np.argsort(owner, kind="stable")
        tris, owner = tris[order], owner[order]
        area = 0.5 * np.abs(
            (tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
            - (tris[:, 1, 1] - tris[:, 0, 1]) * (tris[:, 2, 0] - tris[:, 0, 0])
        )
        r = self.base_rule
        x = np.einsum("qk,mkd->mqd", r.nodes, tris).reshape(-1, 2)
        w = (area[:, None] * r.weights[None, :]).ravel()
        return QuadPoints(x, w, np.repeat(owner, len(r.weights)))


def default_scheme(target: FeatureSet | None = None, levels: int = 6, degree: int = 4) -> GradedScheme:
    return GradedScheme(triangle_rule(degree), levels, target)


# -------------------------------------------------------------------- norms
@dataclass(frozen=True)
class NormResult:
    value: float
    diagnostic: float  # relative change between grading levels L-1 and L

    def __float__(self):
        return self.value


def _sum(values) -> float:
    return float(math.fsum(values))


def integrate(mesh, scheme: GradedScheme, integrand: Callable) -> float:
    """sum_q w_q * integrand(x_q, tri_q), compensated summation in point order."""
    qp = scheme.points(mesh)
    vals = np.asarray(integrand(qp.x, qp.tri), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite integrand value at a quadrature node (node on the singular set?)")
    return _sum(qp.w * vals)


def _gradient_values(u, x, tri):
    from .fem import FEFunction

    if isinstance(u, FEFunction):
        return u.triangle_gradients()[tri]
    return np.asarray(u(x), dtype=float)


def _value_values(u, x, tri):
    from .fem import FEFunction

    if isinstance(u, FEFunction):
        return u.evaluate_in(x, tri)
    return np.asarray(u(x), dtype=float)


def _weighted(mesh, scheme, weight, p, pointwise) -> float:
    def integrand(x, tri):
        wv = 1.0 if weight is None else weight.evaluate(x)
        return np.abs(pointwise(x, tri)) ** p * wv

    return integrate(mesh, scheme, integrand) ** (1.0 / p)


def _with_diag(mesh, scheme, weight, p, pointwise) -> NormResult:
    v = _weighted(mesh, scheme, weight, p, pointwise)
    if scheme.grading_target is None or scheme.levels == 0:
        return NormResult(v, 0.0)
    vc = _weighted(mesh, scheme.coarser(), weight, p, pointwise)
    diag = abs(v - vc) / v if v > 0 else abs(v - vc)
    return NormResult(v, diag)


def weighted_seminorm(u, weight: PowerWeight | None, p: float, scheme: GradedScheme, mesh=None) -> NormResult:
    """(int |grad u|^p w)^{1/p}; ``u`` is an FEFunction or a callable x -> grad (N, 2)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    mesh = mesh if mesh is not None else u.mesh

    def mag(x, tri):
        g = _gradient_values(u, x, tri)
        return np.hypot(g[:, 0], g[:, 1])

    return _with_diag(mesh, scheme, weight, p, mag)


def weighted_norm(u, weight: PowerWeight | None, p: float, scheme: GradedScheme, mesh=None) -> NormResult:
    """(int |u|^p w)^{1/p}; ``u`` is an FEFunction or a callable x -> values (N,)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    mesh = mesh if mesh is not None else u.mesh
    return _with_diag(mesh, scheme, weight, p, lambda x, tri: _value_values(u, x, tri))


def weighted_field_norm(field_fn, weight, p, scheme, mesh) -> NormResult:
    """(int |q|^p w)^{1/p} for a vector field given as callable x -> (N, 2)."""

    def mag(x, tri):
        q = np.asarray(field_fn(x), dtype=float)
        return np.hypot(q[:, 0], q[:, 1])

    return _with_diag(mesh, scheme, weight, p, mag)
