"""Discrete maximal operators and numerical probes of Green-function and localization bounds.

Every probe reports a measured constant (a lower bound for a supremum) together with its
trend over mesh generations or grid resolutions. Nothing here is compared against a
theoretical value; acceptance is refinement stability.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fem import DivField, FEFunction, PointMass, galerkin_project, solve
from .mesh import ConvexPolygon, Mesh
from .quadrature import GradedScheme, default_scheme, triangle_rule
from .weights import Box, FeatureSet, PowerWeight


@dataclass(eq=False)
class GridSampling:
    """Cell-midpoint samples on an n x n grid over ``box``; ``values[ix, iy]``."""

    box: Box
    values: np.ndarray
    mask: np.ndarray | None = None  # optional validity flags (e.g. inside the domain)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("grid values must be a square 2D array")
        n = v.shape[0]
        if n < 8 or n & (n - 1):
            raise ValueError(f"grid resolution must be a power of two >= 8, got {n}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid values must be finite")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return self.box.side / self.n

    def centers(self) -> np.ndarray:
        xs, ys = self.box.cell_centers(self.n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @classmethod
    def sample(cls, f: Callable, box: Box, n: int) -> "GridSampling":
        xs, ys = box.cell_centers(n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X, Y], axis=-1).reshape(-1, 2)
        return cls(box, np.asarray(f(pts), dtype=float).reshape(n, n))


@dataclass
class ConstantReport:
    name: str
    measured_constant: float
    sample_count: int
    argmax: list | None = None
    trend: list[float] = field(default_factory=list)
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def last_change(self) -> float:
        """Relative change between the last two trend entries."""
        a, b = self.trend[-2], self.trend[-1]
        return abs(b - a) / max(abs(b), abs(a)) if max(abs(a), abs(b)) > 0 else 0.0

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k in ("name", "params", "measured_constant", "argmax", "trend")}
        return json.dumps(d, default=float)


# --------------------------------------------------------- maximal operators
def _dyadic_box_sums(a: np.ndarray):
    """Yield (s, S) with S[i, j] = sum of a over the s x s window at (i, j); additions only."""
    s, S = 1, a
    n = a.shape[0]
    yield s, S
    while 2 * s <= n:
        S = S[:-s, :-s] + S[s:, :-s] + S[:-s, s:] + S[s:, s:]
        s *= 2
        yield s, S


def _window_max(a: np.ndarray, s: int, axis: int) -> np.ndarray:
    """out[k] = max a[k:k+s] along ``axis`` for power-of-two ``s`` (doubling, exact)."""
    a = np.moveaxis(a, axis, 0)
    k = 1
    while k < s:
        a = np.maximum(a[:-k], a[k:])
        k *= 2
    return np.moveaxis(a, 0, axis)


def _spread_max(A: np.ndarray, s: int, n: int) -> np.ndarray:
    """out[i, j] = max of A over window origins (a, b) whose s-window contains (i, j)."""
    pad = np.full((n + s - 1, n + s - 1), -np.inf)
    pad[s - 1:s - 1 + A.shape[0], s - 1:s - 1 + A.shape[1]] = A
    return _window_max(_window_max(pad, s, 0), s, 1)


def hl_maximal(g: GridSampling, max_side: int | None = None) -> GridSampling:
    """Discrete Hardy-Littlewood maximal function.

    At every cell: the max, over grid-snapped squares of dyadic side 1, 2, 4, ..., n cells
    that contain the cell (in any position), of the average of |f|.
    """
    n = g.n
    a = np.abs(g.values)
    out = a.copy()
    for s, S in _dyadic_box_sums(a):
        if max_side is not None and s > max_side:
            break
        if s == 1:
            continue
        out = np.maximum(out, _spread_max(S / (s * s), s, n))
    return GridSampling(g.box, out)


def square_inside_mask(box: Box, n: int, s: int, polygon: ConvexPolygon | None) -> np.ndarray:
    """For each window origin, whether the s x s square lies in the closed polygon."""
    m = n - s + 1
    if polygon is None:
        return np.ones((m, m), bool)
    h = box.side / n
    x0 = box.x0 + h * np.arange(m)
    y0 = box.y0 + h * np.arange(m)
    X, Y = np.meshgrid(x0, y0, indexing="ij")
    ok = np.ones((m, m), bool)
    tol = 1e-12 * polygon.diameter
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        pts = np.stack([X + dx * s * h, Y + dy * s * h], -1).reshape(-1, 2)
        ok &= polygon.contains(pts, tol=tol).reshape(m, m)
    return ok


def sharp_maximal_local(g: GridSampling, polygon: ConvexPolygon | None, max_side: int | None = None,
                        chunk: int = 2**22) -> GridSampling:
    """Local sharp maximal function: sup over squares Q in the domain containing x of avg |f - f_Q|.

    Cells whose center lies outside the polygon get 0 and ``mask`` False.
    """
    n = g.n
    f = g.values
    out = np.zeros((n, n))
    for s in (2**j for j in range(int(math.log2(n)) + 1)):
        if max_side is not None and s > max_side:
            break
        if s == 1:
            continue  # |f - f_Q| = 0 on single cells
        m = n - s + 1
        inside = square_inside_mask(g.box, n, s, polygon)
        osc = np.full((m, m), -np.inf)
        win = sliding_window_view(f, (s, s))  # (m, m, s, s)
        rows = max(1, chunk // (m * s * s))
        for r0 in range(0, m, rows):
            # shift by one entry of each window: exact zero oscillation for constant data
            w = win[r0:r0 + rows]
            w = w - w[:, :, :1, :1]
            mean = w.mean(axis=(2, 3), keepdims=True)
            osc[r0:r0 + rows] = np.abs(w - mean).mean(axis=(2, 3))
        osc[~inside] = -np.inf
        out = np.maximum(out, _spread_max(osc, s, n))
    out[~np.isfinite(out)] = 0.0
    mask = np.ones((n, n), bool)
    if polygon is not None:
        mask = polygon.contains(g.centers().reshape(-1, 2)).reshape(n, n)
        out[~mask] = 0.0
    return GridSampling(g.box, out, mask)


# ----------------------------------------------------------- green function
def _check_separation(pairs_min: float, min_separation: float, h: float):
    if min_separation < 4 * h * (1 - 1e-12):
        raise ValueError(f"min_separation {min_separation:g} is below 4 h_max = {4 * h:g}")
    if pairs_min < min_separation * (1 - 1e-12):
        raise ValueError(f"source/observer pair closer ({pairs_min:g}) than min_separation {min_separation:g}")


def verify_green_gradient_bound(meshes: Sequence[Mesh], sources, observers, min_separation: float,
                                rel_tol: float = 1e-12) -> ConstantReport:
    """max over pairs of |grad_x G_h(x, y)| |x - y| per mesh generation."""
    sources = np.asarray(sources, dtype=float)
    observers = np.asarray(observers, dtype=float)
    dist = np.hypot(*(observers[:, None, :] - sources[None, :, :]).transpose(2, 0, 1))  # (O, S)
    _check_separation(dist.min(), min_separation, min(m.h_max for m in meshes))
    trend, argmaxes, sym_errs = [], [], []
    for mesh in meshes:
        greens = [solve(mesh, PointMass(tuple(y)), rel_tol) for y in sources]
        prod = np.empty_like(dist)
        for j, G in enumerate(greens):
            g = G.gradient_at(observers)
            prod[:, j] = np.hypot(g[:, 0], g[:, 1]) * dist[:, j]
        i, j = np.unravel_index(np.argmax(prod), prod.shape)
        trend.append(float(prod[i, j]))
        argmaxes.append([observers[i].tolist(), sources[j].tolist()])
        # G_h(y_a; y_b) versus G_h(y_b; y_a)
        V = np.array([G(sources) for G in greens])  # V[b, a] = G_h(y_a; source y_b)
        sym_errs.append(float(np.abs(V - V.T).max() / np.abs(V).max()))
    return ConstantReport(
        "green_gradient_bound", trend[-1], dist.size * len(meshes), argmaxes[-1], trend,
        {"sources": len(sources), "observers": len(observers), "min_separation": min_separation},
        {"symmetry_error": sym_errs},
    )


def _mixed_second(mesh: Mesh, x: np.ndarray, y: np.ndarray, step: float, rel_tol: float) -> np.ndarray:
    """D[k, i, j] ~ d_{x_i} d_{y_j} G_h(x_k, y) by centred differences of solves in y."""
    D = np.empty((len(x), 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        gp = solve(mesh, PointMass(tuple(y + e)), rel_tol).gradient_at(x)
        gm = solve(mesh, PointMass(tuple(y - e)), rel_tol).gradient_at(x)
        D[:, :, j] = (gp - gm) / (2 * step)
    return D


def default_gamma_grid(polygon: ConvexPolygon, count: int = 10) -> np.ndarray:
    top = float(polygon.corner_exponents.min()) - 1
    return np.linspace(0.05, top - 0.05, count)


def verify_green_holder_bound(meshes: Sequence[Mesh], y, x_pairs, gamma_grid, rel_tol: float = 1e-12,
                              stability: float = 0.25) -> ConstantReport:
    """Hoelder-type bound for the mixed second derivatives of G_h.

    ratio(gamma) = max_pairs |D2G(x, y) - D2G(xb, y)| / (|x - xb|^g (|x - y|^(-2-g) + |xb - y|^(-2-g)))
    """
    y = np.asarray(y, dtype=float)
    pairs = np.asarray(x_pairs, dtype=float)  # (P, 2, 2)
    x, xb = pairs[:, 0], pairs[:, 1]
    dxx = np.hypot(*(x - xb).T)
    if np.any(dxx == 0):
        raise ValueError("x and x-bar must differ")
    gammas = np.asarray(gamma_grid, dtype=float)
    pts = np.vstack([x, xb, y[None]])
    h_fine = min(m.h_max for m in meshes)
    d_xy = np.r_[np.hypot(*(x - y).T), np.hypot(*(xb - y).T)]
    if d_xy.min() < 4 * h_fine:
        raise ValueError("observation points must stay 4 h_max away from the source")
    polygon = meshes[-1].polygon
    if polygon is not None:
        cd = np.hypot(*(pts[:, None] - polygon.vertices[None]).transpose(2, 0, 1))
        if cd.min() < 4 * h_fine:
            raise ValueError("points must stay 4 h_max away from the polygon corners")
    table = []
    for mesh in meshes:
        h = mesh.h_max
        D = _mixed_second(mesh, np.vstack([x, xb]), y, 2 * h, rel_tol)
        diff = np.abs(D[: len(x)] - D[len(x):]).max(axis=(1, 2))
        rx = np.hypot(*(x - y).T)
        rxb = np.hypot(*(xb - y).T)
        row = [float((diff / (dxx**g * (rx ** (-2 - g) + rxb ** (-2 - g)))).max()) for g in gammas]
        table.append(row)
    table = np.array(table)  # (generations, gammas)
    last = np.abs(table[-1] - table[-2]) / np.maximum(table[-1], table[-2])
    stable = gammas[last < stability]
    gamma_star = float(stable.max()) if len(stable) else float("nan")
    return ConstantReport(
        "green_holder_bound", float(table[-1].max()), table.size, None, table[:, 0].tolist(),
        {"gammas": gammas.tolist(), "source": y.tolist(), "pairs": len(pairs)},
        {"table": table.tolist(), "largest_stable_gamma": gamma_star, "last_change": last.tolist()},
    )


def holder_trend(report: ConstantReport, gamma: float) -> list[float]:
    g = np.asarray(report.params["gammas"])
    k = int(np.argmin(np.abs(g - gamma)))
    return [row[k] for row in report.extra["table"]]


# ------------------------------------------------------------- localization
def verify_localization(meshes: Sequence[Mesh], grad_u: Callable, z_points, lambda_grid,
                        u_h_list: Sequence[FEFunction] | None = None, quad_levels: int = 3,
                        rel_tol: float = 1e-10) -> ConstantReport:
    """C_meas(lam) = max_z |grad u_h(z)|^2 / RHS(z), per generation.

    RHS(z) = (h^-2 int_{T_z} |grad u|)^2 + int h^lam (|x - z|^2 + h^2)^(-(2 + lam)/2) |grad u|^2.
    ``grad_u`` may also be an FEFunction on the same mesh (the u in V_h case).
    """
    z_points = np.asarray(z_points, dtype=float)
    lambdas = np.asarray(lambda_grid, dtype=float)
    table = []
    for gi, mesh in enumerate(meshes):
        if mesh.polygon is not None and np.any(mesh.polygon.boundary_distance(z_points) <= 0):
            raise ValueError("localization points must be interior")
        if isinstance(grad_u, FEFunction):
            u_fe = grad_u
            gfun = None
        else:
            u_fe = None
            gfun = grad_u
        if u_h_list is not None:
            u_h = u_h_list[gi]
        elif u_fe is not None:
            u_h = u_fe
        else:
            u_h = galerkin_project(mesh, gfun, scheme=default_scheme(levels=0, degree=6), rel_tol=rel_tol)
        h = mesh.h_max
        tz = mesh.locate_many(z_points)
        lhs = (u_h.triangle_gradients()[tz] ** 2).sum(axis=1)
        rule = triangle_rule(6)

        def gradmag(x, tri):
            if u_fe is not None:
                g = u_fe.triangle_gradients()[tri]
            else:
                g = gfun(x)
            return np.hypot(g[:, 0], g[:, 1])

        # local term on T_z
        p = mesh.vertices[mesh.triangles[tz]]
        xq = np.einsum("qk,zkd->zqd", rule.nodes, p)
        wq = mesh.areas[tz][:, None] * rule.weights[None, :]
        loc = np.array([np.sum(wq[k] * gradmag(xq[k], np.full(len(rule.weights), tz[k]))) for k in range(len(tz))])
        term1 = (loc / h**2) ** 2
        ratios = np.full((len(lambdas), len(z_points)), np.nan)
        for k, z in enumerate(z_points):
            qp = GradedScheme(rule, quad_levels, FeatureSet(points=(tuple(z),))).points(mesh)
            g2 = gradmag(qp.x, qp.tri) ** 2
            r2 = ((qp.x - z) ** 2).sum(axis=1)
            for i, lam in enumerate(lambdas):
                kern = h**lam * (r2 + h * h) ** (-(2 + lam) / 2)
                rhs = term1[k] + math.fsum(qp.w * kern * g2)
                if rhs == 0 and lhs[k] == 0:
                    continue  # 0/0
                ratios[i, k] = lhs[k] / rhs
        table.append([float(np.nanmax(r)) if np.any(np.isfinite(r)) else 0.0 for r in ratios])
    table = np.array(table)
    changes = [float(abs(table[-1, i] - table[-2, i]) / max(table[-1, i], table[-2, i])) for i in range(len(lambdas))]
    spread = [float((table[:, i].max() - table[:, i].min()) / table[:, i].max()) for i in range(len(lambdas))]
    best = int(np.argmin(spread))
    return ConstantReport(
        "localization", float(table[-1, best]), table.size * len(z_points), None, table[:, best].tolist(),
        {"lambdas": lambdas.tolist(), "z_points": z_points.tolist()},
        {"table": table.tolist(), "last_change": changes, "spread": spread, "best_lambda": float(lambdas[best])},
    )


# ------------------------------------------------------ sharp maximal lemma
def _grid_inside_polygon(polygon: ConvexPolygon, box: Box, n: int) -> np.ndarray:
    xs, ys = box.cell_centers(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return polygon.contains(np.stack([X, Y], -1).reshape(-1, 2)).reshape(n, n)


def verify_sharp_maximal_lemma(q: Callable, s: float, resolutions: Sequence[int], mesh: Mesh,
                               u_h: FEFunction | None = None, rel_tol: float = 1e-10) -> ConstantReport:
    """max over grid cells of M#_Omega(|grad u_h|) / (M |q|^s)^(1/s), u_h solving -Lap u = div q."""
    polygon = mesh.polygon
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    box = Box(float(lo[0]), float(lo[1]), float((hi - lo).max()))
    if u_h is None:
        u_h = solve(mesh, DivField(q, default_scheme(levels=0, degree=4)), rel_tol)
    grads = u_h.triangle_gradients()
    trend, flagged, argmaxes = [], [], []
    for n in resolutions:
        inside = _grid_inside_polygon(polygon, box, n) if polygon is not None else np.ones((n, n), bool)
        xs, ys = box.cell_centers(n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        pts = np.stack([X, Y], -1).reshape(-1, 2)
        gu = np.zeros(n * n)
        qv = np.zeros(n * n)
        idx = inside.ravel()
        tri = mesh.locate_many(pts[idx])
        gu[idx] = np.hypot(*grads[tri].T)
        qq = np.asarray(q(pts[idx]), dtype=float)
        qv[idx] = np.hypot(qq[:, 0], qq[:, 1])  # q extended by zero outside the domain
        num = sharp_maximal_local(GridSampling(box, gu.reshape(n, n)), polygon).values
        den = hl_maximal(GridSampling(box, (qv**s).reshape(n, n))).values ** (1 / s)
        bad = (den == 0) & (num > 0) & inside
        good = inside & (den > 0)
        ratio = np.zeros((n, n))
        ratio[good] = num[good] / den[good]
        k = np.unravel_index(np.argmax(ratio), ratio.shape)
        trend.append(float(ratio[k]))
        argmaxes.append([float(X[k]), float(Y[k])])
        flagged.append(int(bad.sum()))
    return ConstantReport("sharp_maximal_lemma", trend[-1], sum(r * r for r in resolutions), argmaxes[-1], trend,
                          {"s": s, "resolutions": list(resolutions)}, {"flagged": flagged})


def verify_mean_oscillation_lemma(f: GridSampling, weight: PowerWeight | None, p: float,
                                  polygon: ConvexPolygon | None) -> ConstantReport:
    """||f - f_Omega||_{L^p_w} / ||M#_Omega f||_{L^p_w} with grid Riemann sums."""
    n = f.n
    inside = _grid_inside_polygon(polygon, f.box, n) if polygon is not None else np.ones((n, n), bool)
    if weight is None:
        w = np.ones((n, n))
    else:
        from .weights import sample_weight_grid

        w = sample_weight_grid(weight, f.box, n)
    vals = f.values
    mean = vals[inside].mean()
    lhs = (np.sum(np.abs(vals - mean)[inside] ** p * w[inside])) ** (1 / p)
    ms = sharp_maximal_local(f, polygon).values
    rhs = (np.sum(ms[inside] ** p * w[inside])) ** (1 / p)
    ratio = 0.0 if lhs == 0 else float(lhs / rhs)
    return ConstantReport("mean_oscillation_lemma", ratio, int(inside.sum()), None, [ratio],
                          {"p": p, "n": n, "lambda": None if weight is None else weight.lam},
                          {"lhs": float(lhs), "rhs": float(rhs)})
