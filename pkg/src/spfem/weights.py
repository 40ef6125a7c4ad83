"""Distance-power weights dist(x, Gamma)^lambda and brute-force Muckenhoupt constants."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class FeatureSet:
    """Finite union of points (k = 0) and segments (k = 1)."""

    points: tuple[tuple[float, float], ...] = ()
    segments: tuple[tuple[float, float, float, float], ...] = ()

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        segs = tuple(tuple(float(c) for c in s) for s in self.segments)
        if not pts and not segs:
            raise ValueError("feature set must be nonempty")
        if any(len(p) != 2 for p in pts) or any(len(s) != 4 for s in segs):
            raise ValueError("points need 2 coordinates, segments 4")
        for s in segs:
            if s[0] == s[2] and s[1] == s[3]:
                raise ValueError(f"degenerate segment {s}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "segments", segs)

    @property
    def k(self) -> int:
        return 1 if self.segments else 0

    def check_inside(self, polygon, tol: float = 1e-12) -> None:
        pts = list(self.points) + [s[:2] for s in self.segments] + [s[2:] for s in self.segments]
        ok = polygon.contains(np.array(pts), tol=tol * polygon.diameter)
        if not np.all(ok):
            raise ValueError(f"feature {pts[int(np.argmin(ok))]} lies outside the domain")

    def distance(self, x) -> np.ndarray:
        """Exact Euclidean distance from each row of ``x`` (..., 2) to the set."""
        x = np.asarray(x, dtype=float)
        d = np.full(x.shape[:-1], np.inf)
        for px, py in self.points:
            d = np.minimum(d, np.hypot(x[..., 0] - px, x[..., 1] - py))
        for ax, ay, bx, by in self.segments:
            d = np.minimum(d, segment_distance(x, (ax, ay), (bx, by)))
        return d

    def to_text(self) -> str:
        lines = [f"point {x:.17g} {y:.17g}" for x, y in self.points]
        lines += ["segment " + " ".join(f"{c:.17g}" for c in s) for s in self.segments]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FeatureSet":
        points, segments = [], []
        for n, raw in enumerate(text.replace(";", "\n").splitlines(), 1):
            line = raw.split("#")[0].strip()
            if not line:
                continue
            kind, *vals = line.split()
            if kind == "point" and len(vals) == 2:
                points.append(tuple(map(float, vals)))
            elif kind == "segment" and len(vals) == 4:
                segments.append(tuple(map(float, vals)))
            else:
                raise ValueError(f"line {n}: cannot parse feature {raw!r}")
        return cls(tuple(points), tuple(segments))

    @classmethod
    def read(cls, path) -> "FeatureSet":
        return cls.from_text(Path(path).read_text())


def segment_distance(x, a, b) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    len2 = dx * dx + dy * dy
    # a length that underflows to 0 makes the segment numerically a point (t = 0)
    num = (x[..., 0] - ax) * dx + (x[..., 1] - ay) * dy
    t = np.clip(np.divide(num, len2, out=np.zeros(np.broadcast(num, len2).shape), where=len2 != 0), 0.0, 1.0)
    return np.hypot(x[..., 0] - (ax + t * dx), x[..., 1] - (ay + t * dy))


@dataclass(frozen=True)
class PowerWeight:
    lam: float
    features: FeatureSet
    scale: float = 1.0
    n: int = 2

    @property
    def k(self) -> int:
        return self.features.k

    def evaluate(self, x) -> np.ndarray | float:
        """``scale * dist(x, Gamma)**lam`` with 0**lam -> inf (lam < 0), 0 (lam > 0), 1 (lam == 0)."""
        x = np.asarray(x, dtype=float)
        if self.lam == 0:
            out = np.full(x.shape[:-1], float(self.scale))
        else:
            d = self.features.distance(x)
            with np.errstate(divide="ignore"):
                out = self.scale * d**self.lam
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate

    def in_ap(self, p: float) -> bool:
        lo, hi = ap_range(self.n, self.k, p)
        return lo < self.lam < hi

    def in_a1(self) -> bool:
        # A_1 for distance powers: -(n-k) < lam <= 0
        return -(self.n - self.k) < self.lam <= 0


def dual_weight(weight: PowerWeight, p: float) -> PowerWeight:
    """w' = w^{-1/(p-1)}."""
    if not p > 1:
        raise ValueError(f"dual weight needs p > 1, got {p}")
    lam = -weight.lam / (p - 1)
    return PowerWeight(lam + 0.0, weight.features, weight.scale ** (-1.0 / (p - 1)), weight.n)


def ap_range(n: int, k: float, p: float) -> tuple[float, float]:
    """Open interval of exponents lam with dist(., Gamma)^lam in A_p for a k-regular Gamma."""
    if not 0 <= k < n:
        raise ValueError(f"need 0 <= k < n, got k={k}, n={n}")
    if not p > 1:
        raise ValueError(f"need p > 1, got {p}")
    return (-(n - k), (n - k) * (p - 1))


# ------------------------------------------------------------ A_p estimation
@dataclass(frozen=True)
class Box:
    """Axis-aligned square [x0, x0 + side] x [y0, y0 + side]."""

    x0: float
    y0: float
    side: float

    def cell_centers(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        c = (np.arange(n) + 0.5) / n
        return self.x0 + self.side * c, self.y0 + self.side * c


@dataclass
class ApEstimate:
    p: float
    depth: int
    value: float
    cube_count: int
    samples_per_cube: int
    by_depth: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        d = asdict(self)
        d.pop("by_depth")
        return json.dumps(d)


def sample_weight_grid(weight: PowerWeight, box: Box, n: int) -> np.ndarray:
    """Weight at the n x n cell midpoints of ``box``, indexed [ix, iy].

    Midpoints that land on Gamma are moved by half a sample spacing in +x (then +y).
    """
    xs, ys = box.cell_centers(n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    if weight.lam != 0:
        half = 0.5 * box.side / n
        for shift in ((half, 0.0), (0.0, half)):
            hit = weight.features.distance(pts) == 0
            if not hit.any():
                break
            pts[hit] += shift
    return np.asarray(weight.evaluate(pts), dtype=float)


def _block_means(a: np.ndarray, cubes: int) -> np.ndarray:
    m = a.shape[0] // cubes
    return a.reshape(cubes, m, cubes, m).mean(axis=(1, 3))


def _ap_raw(w: np.ndarray, w_dual: np.ndarray, depth: int, p: float) -> float:
    best = 0.0
    for level in range(depth + 1):
        cubes = 2**level
        prod = _block_means(w, cubes) * _block_means(w_dual, cubes) ** (p - 1)
        best = max(best, float(prod.max()))
    return best


def estimate_ap_constant(weight: PowerWeight, p: float, box: Box, depth: int, samples_per_cube: int = 16,
                         workers: int = 1) -> ApEstimate:
    """Brute-force lower-bound estimate of [w]_{A_p} over the dyadic subcubes of ``box``.

    At sampling depth D the weight is sampled at the midpoints of a uniform grid with
    sqrt(samples_per_cube) points per side of every depth-D cube, and the A_p product is
    maximised over all dyadic cubes of level <= D, each averaged over all samples it
    contains. The reported value is the running maximum over D' = 0..depth, so it is
    nondecreasing in ``depth`` by construction.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    m = math.isqrt(samples_per_cube)
    if samples_per_cube < 4 or m * m != samples_per_cube:
        raise ValueError("samples_per_cube must be a perfect square >= 4")
    if not p > 1:
        raise ValueError("p must exceed 1")
    if weight.lam == 0:
        by_depth = [1.0] * (depth + 1)
    else:
        dual = dual_weight(weight, p)

        def one(d):
            w = sample_weight_grid(weight, box, m * 2**d)
            return _ap_raw(w, sample_weight_grid(dual, box, m * 2**d), d, p)

        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(workers) as ex:
                raw = list(ex.map(one, range(depth + 1)))
        else:
            raw = [one(d) for d in range(depth + 1)]
        by_depth = list(np.maximum.accumulate(np.asarray(raw)))
    cube_count = sum(4**lv for lv in range(depth + 1))
    return ApEstimate(p, depth, float(by_depth[-1]), cube_count, samples_per_cube, [float(v) for v in by_depth])


def growth_factor(est: ApEstimate, span: int = 3) -> float:
    """Ratio value(depth) / value(depth - span): the divergence signature."""
    b = est.by_depth
    return b[-1] / b[-1 - span]


def a1_constant_on_grid(weight_samples) -> float:
    """max over grid points of (discrete M w)(x) / w(x)."""
    from .probes import hl_maximal

    w = weight_samples.values
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("A_1 estimate needs finite, strictly positive weight samples")
    mw = hl_maximal(weight_samples).values
    return float((mw / w).max())
