"""Points, windows, distances and volume oracles in d >= 2 Euclidean space.

All values are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, a Generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d: pi^(d/2) / Gamma(d/2 + 1)."""
    if d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


@dataclass(frozen=True)
class Window:
    """Axis-aligned box given by two opposite corners, lower_i < upper_i."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("lower and upper must have the same dimension")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"window must satisfy lower_i < upper_i, got {lo} / {hi}")

    @classmethod
    def cube(cls, side: float, d: int, origin: float = 0.0) -> "Window":
        return cls((origin,) * d, (origin + side,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the half-open box [lower, upper)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return np.all((pts >= lo) & (pts < hi), axis=1)

    def sample_uniform(self, n: int, rng) -> np.ndarray:
        rng = as_rng(rng)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        return rng.uniform(lo, hi, size=(n, self.dim))

    def inflate(self, pad: float) -> "Window":
        return Window(
            tuple(a - pad for a in self.lower),
            tuple(b + pad for b in self.upper),
        )


@dataclass(frozen=True)
class Ball:
    """Closed ball, radius 0 is a single point."""

    center: tuple[float, ...]
    radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.radius < 0:
            raise ValueError("ball radius must be >= 0")


def dist_to_points(x, points) -> float:
    """Euclidean distance from x to the nearest of a finite point set."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        return math.inf
    return float(np.min(np.linalg.norm(pts - np.asarray(x, dtype=float), axis=1)))


def dist_to_box(x, lower, upper) -> float:
    """Distance from x to an axis-aligned box, exact via per-axis clamping."""
    x = np.asarray(x, dtype=float)
    gap = np.maximum(np.asarray(lower) - x, 0.0) + np.maximum(x - np.asarray(upper), 0.0)
    return float(np.linalg.norm(gap))


def dist_point_set(x, obstacles) -> float:
    """Infimum distance from point x to a union of points, boxes and balls.

    ``obstacles`` may be a single (n, d) array of points, a Window, a Ball,
    or an iterable mixing those. The empty set yields +infinity by
    convention, which keeps vacuum checks on empty configurations trivial.
    """
    if obstacles is None:
        return math.inf
    if isinstance(obstacles, Window):
        return dist_to_box(x, obstacles.lower, obstacles.upper)
    if isinstance(obstacles, Ball):
        return max(0.0, dist_to_points(x, [obstacles.center]) - obstacles.radius)
    if isinstance(obstacles, np.ndarray):
        return dist_to_points(x, obstacles)
    best = math.inf
    for item in obstacles:
        if isinstance(item, (Window, Ball, np.ndarray)):
            best = min(best, dist_point_set(x, item))
        else:
            best = min(best, dist_to_points(x, [item]))
    return best


@dataclass(frozen=True)
class Configuration:
    """A finite simple point pattern together with its simulation window.

    Points inside the window are the interior pattern, points outside act
    as the boundary condition. The coordinate array is locked read-only.
    """

    points: np.ndarray
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.window.dim)
        if pts.ndim != 2 or pts.shape[1] != self.window.dim:
            raise ValueError(
                f"points must have shape (n, {self.window.dim}), got {pts.shape}"
            )
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) > 1 and len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("configuration must be simple (no duplicate points)")

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def interior(self) -> np.ndarray:
        if self.n == 0:
            return self.points
        return self.points[self.window.contains(self.points)]

    @property
    def boundary(self) -> np.ndarray:
        if self.n == 0:
            return self.points
        return self.points[~self.window.contains(self.points)]

    @classmethod
    def empty(cls, window: Window) -> "Configuration":
        return cls(np.empty((0, window.dim)), window)


def _shape_bbox(shape, d: int):
    if isinstance(shape, Window):
        return np.asarray(shape.lower), np.asarray(shape.upper)
    if isinstance(shape, Ball):
        c = np.asarray(shape.center)
        return c - shape.radius, c + shape.radius
    pt = np.asarray(shape, dtype=float).reshape(-1)
    if pt.shape != (d,):
        raise ValueError(f"expected a point of dimension {d}, got shape {pt.shape}")
    return pt, pt


def dilated_volume(shapes, r: float, n: int, seed) -> tuple[float, float]:
    """Monte Carlo volume of the r-dilation of a union of boxes/balls/points.

    Estimates |{x : dist(x, a) <= r}| by uniform sampling in the bounding
    box; r = 0 measures the union itself. Returns (estimate, standard error).
    """
    if r < 0:
        raise ValueError("dilation radius must be >= 0")
    if n < 1:
        raise ValueError("sample count must be >= 1")
    shapes = list(shapes) if not isinstance(shapes, (Window, Ball)) else [shapes]
    if not shapes:
        return 0.0, 0.0
    dims = set()
    for s in shapes:
        if isinstance(s, Window):
            dims.add(s.dim)
        elif isinstance(s, Ball):
            dims.add(len(s.center))
        else:
            dims.add(np.asarray(s, dtype=float).reshape(-1).shape[0])
    if len(dims) != 1:
        raise ValueError("all shapes must share one dimension")
    d = dims.pop()
    los, his = zip(*(_shape_bbox(s, d) for s in shapes))
    lo = np.min(np.stack(los), axis=0) - r
    hi = np.max(np.stack(his), axis=0) + r
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("dilated_volume requires bounded input shapes")
    box_vol = float(np.prod(hi - lo))
    rng = as_rng(seed)
    samples = rng.uniform(lo, hi, size=(n, d))

    inside = np.zeros(n, dtype=bool)
    for s in shapes:
        todo = ~inside
        if not np.any(todo):
            break
        pts = samples[todo]
        if isinstance(s, Window):
            gap = np.maximum(np.asarray(s.lower) - pts, 0.0) + np.maximum(
                pts - np.asarray(s.upper), 0.0
            )
            dist = np.linalg.norm(gap, axis=1)
        elif isinstance(s, Ball):
            dist = np.maximum(
                np.linalg.norm(pts - np.asarray(s.center), axis=1) - s.radius, 0.0
            )
        else:
            dist = np.linalg.norm(pts - np.asarray(s, dtype=float), axis=1)
        inside[todo] = dist <= r
    p = float(np.mean(inside))
    est = box_vol * p
    se = box_vol * math.sqrt(p * (1.0 - p) / n)
    return est, se


try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional speedup
    _HAVE_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


@_njit(cache=True)
def _union_area_kernel(pts: np.ndarray, R: float) -> float:
    """Scalar-loop twin of the disc-union boundary-arc algorithm."""
    n = pts.shape[0]
    two_pi = 2.0 * math.pi
    total = 0.0
    starts = np.empty(2 * n + 2)
    ends = np.empty(2 * n + 2)
    for i in range(n):
        cx = pts[i, 0]
        cy = pts[i, 1]
        cnt = 0
        duplicate = False
        for j in range(n):
            if j == i:
                continue
            dx = pts[j, 0] - cx
            dy = pts[j, 1] - cy
            d = math.sqrt(dx * dx + dy * dy)
            if d == 0.0:
                if j < i:
                    duplicate = True  # twin centre already accounted for
                    break
                continue
            if d >= 2.0 * R:
                continue
            phi = math.atan2(dy, dx)
            ratio = d / (2.0 * R)
            if ratio > 1.0:
                ratio = 1.0
            half = math.acos(ratio)
            if half <= 0.0:
                continue
            a = (phi - half) % two_pi
            b = a + 2.0 * half
            if b <= two_pi:
                starts[cnt] = a
                ends[cnt] = b
                cnt += 1
            else:
                starts[cnt] = a
                ends[cnt] = two_pi
                cnt += 1
                starts[cnt] = 0.0
                ends[cnt] = b - two_pi
                cnt += 1
        if duplicate:
            continue
        if cnt == 0:
            total += math.pi * R * R
            continue
        order = np.argsort(starts[:cnt])
        first_start = starts[order[0]]
        cur_end = ends[order[0]]
        for t in range(1, cnt):
            a = starts[order[t]]
            b = ends[order[t]]
            if a <= cur_end:
                if b > cur_end:
                    cur_end = b
            else:
                total += 0.5 * (
                    R * R * (a - cur_end)
                    + R * cx * (math.sin(a) - math.sin(cur_end))
                    - R * cy * (math.cos(a) - math.cos(cur_end))
                )
                cur_end = b
        wrap = first_start + two_pi
        if wrap > cur_end:
            total += 0.5 * (
                R * R * (wrap - cur_end)
                + R * cx * (math.sin(wrap) - math.sin(cur_end))
                - R * cy * (math.cos(wrap) - math.cos(cur_end))
            )
    return total


def disc_union_area(centers, radius: float) -> float:
    """Exact area of a union of equal-radius discs in the plane.

    Walks the boundary arcs of every circle that are not covered by any
    other disc and integrates x dy - y dx over them (Green's theorem),
    which handles disconnected unions and interior holes alike. A jitted
    kernel carries the hot path; ``disc_union_area_py`` is the reference.
    """
    pts = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(pts) == 0 or radius <= 0:
        return 0.0
    if _HAVE_NUMBA:
        return float(_union_area_kernel(np.ascontiguousarray(pts), float(radius)))
    return disc_union_area_py(pts, radius)


def disc_union_area_py(centers, radius: float) -> float:
    """Pure-python reference implementation of ``disc_union_area``."""
    pts = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    pts = np.unique(pts, axis=0)
    n = len(pts)
    R = float(radius)
    if R <= 0:
        return 0.0
    two_pi = 2.0 * math.pi
    total = 0.0
    for i in range(n):
        cx, cy = pts[i]
        delta = pts - pts[i]
        dist = np.hypot(delta[:, 0], delta[:, 1])
        near = np.flatnonzero((dist > 0.0) & (dist < 2.0 * R))
        if near.size == 0:
            total += math.pi * R * R
            continue
        # Angular intervals of this circle's boundary covered by neighbours.
        intervals = []
        for j in near:
            phi = math.atan2(delta[j, 1], delta[j, 0])
            half = math.acos(min(1.0, dist[j] / (2.0 * R)))
            if half <= 0.0:
                continue
            a = (phi - half) % two_pi
            b = a + 2.0 * half
            if b <= two_pi:
                intervals.append((a, b))
            else:
                intervals.append((a, two_pi))
                intervals.append((0.0, b - two_pi))
        if not intervals:
            total += math.pi * R * R
            continue
        intervals.sort()
        merged = [list(intervals[0])]
        for a, b in intervals[1:]:
            if a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        # Free (uncovered) arcs are the gaps between merged covered arcs.
        free = []
        for idx in range(len(merged) - 1):
            free.append((merged[idx][1], merged[idx + 1][0]))
        wrap_gap = (merged[0][0] + two_pi) - merged[-1][1]
        if wrap_gap > 0.0:
            free.append((merged[-1][1], merged[-1][1] + wrap_gap))
        for a, b in free:
            if b <= a:
                continue
            total += 0.5 * (
                R * R * (b - a)
                + R * cx * (math.sin(b) - math.sin(a))
                - R * cy * (math.cos(b) - math.cos(a))
            )
    return total


def uncovered_disc_area(x, others, r0: float) -> float:
    """Exact area of B_r0(x) not covered by the discs around ``others`` (d=2)."""
    x = np.asarray(x, dtype=float).reshape(2)
    pts = np.asarray(others, dtype=float).reshape(-1, 2)
    full = math.pi * r0 * r0
    if len(pts) == 0:
        return full
    near = pts[np.hypot(*(pts - x).T) < 2.0 * r0]
    if len(near) == 0:
        return full
    # the area the x-disc adds to the union is exactly its uncovered part
    with_x = np.vstack([near, x[None, :]])
    return disc_union_area(with_x, r0) - disc_union_area(near, r0)


class GridIndex:
    """Uniform bucket grid over points, keyed by cell of a fixed side.

    Suited to queries whose radius equals the cell side (cluster analysis
    with the globally constant 2R-overlap radius).
    """

    def __init__(self, points: np.ndarray, cell: float):
        if cell <= 0:
            raise ValueError("cell side must be positive")
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.cell = float(cell)
        self.d = self.points.shape[1]
        self._buckets: dict[tuple[int, ...], list[int]] = {}
        keys = np.floor(self.points / self.cell).astype(np.int64)
        for idx, key in enumerate(map(tuple, keys)):
            self._buckets.setdefault(key, []).append(idx)
        offsets = np.indices((3,) * self.d).reshape(self.d, -1).T - 1
        self._offsets = [tuple(o) for o in offsets]

    def neighborhood(self, x) -> np.ndarray:
        """Indices of points in the 3^d cells around the cell containing x."""
        key = tuple(int(math.floor(v / self.cell)) for v in np.asarray(x, dtype=float))
        out: list[int] = []
        for off in self._offsets:
            cell_key = tuple(k + o for k, o in zip(key, off))
            out.extend(self._buckets.get(cell_key, ()))
        return np.asarray(out, dtype=np.int64)
