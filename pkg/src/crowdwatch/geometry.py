"""Planar geometry: points, rigid frames, homographies and convex hulls."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

HOMOGRAPHY_DET_EPS = 1e-9
COLLINEAR_EPS = 1e-9
W_EPS = 1e-9
INSIDE_TOL = 1e-9


class GeometryError(ValueError):
    pass


class DegenerateCorrespondence(GeometryError):
    pass


class PointAtInfinity(GeometryError):
    pass


class EmptyInput(GeometryError):
    pass


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    def __add__(self, other: Point2) -> Point2:
        return Point2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Point2) -> Point2:
        return Point2(self.x - other.x, self.y - other.y)

    def scaled(self, k: float) -> Point2:
        return Point2(self.x * k, self.y * k)

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def angle(self) -> float:
        return math.atan2(self.y, self.x)

    def distance_to(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def of(cls, p) -> Point2:
        if isinstance(p, Point2):
            return p
        x, y = p
        return cls(float(x), float(y))


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True, slots=True)
class Frame2:
    """Rigid 2-D transform mapping child-frame coordinates into the parent frame."""

    rotation: float = 0.0
    translation: Point2 = field(default_factory=lambda: Point2(0.0, 0.0))

    def __post_init__(self):
        object.__setattr__(self, "rotation", normalize_angle(float(self.rotation)))
        object.__setattr__(self, "translation", Point2.of(self.translation))

    @classmethod
    def from_xyt(cls, x: float, y: float, theta: float) -> Frame2:
        return cls(theta, Point2(x, y))

    @property
    def x(self) -> float:
        return self.translation.x

    @property
    def y(self) -> float:
        return self.translation.y

    def rotate(self, v: Point2) -> Point2:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return Point2(c * v.x - s * v.y, s * v.x + c * v.y)

    def apply(self, p: Point2) -> Point2:
        return self.rotate(Point2.of(p)) + self.translation

    def compose(self, other: Frame2) -> Frame2:
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Frame2(self.rotation + other.rotation, self.apply(other.translation))

    def inverse(self) -> Frame2:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        t = self.translation
        return Frame2(-self.rotation, Point2(-(c * t.x + s * t.y), -(-s * t.x + c * t.y)))

    def to_local(self, p: Point2) -> Point2:
        """Express a parent-frame point in this frame."""
        d = Point2.of(p) - self.translation
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return Point2(c * d.x + s * d.y, -s * d.x + c * d.y)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s, self.x], [s, c, self.y], [0.0, 0.0, 1.0]])


class Homography:
    """3x3 projective map normalised so that ``m[2, 2] == 1``."""

    __slots__ = ("m",)

    def __init__(self, m):
        m = np.array(m, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise GeometryError("homography has non-finite entries")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= HOMOGRAPHY_DET_EPS:
            raise GeometryError("homography is singular")
        m.setflags(write=False)
        self.m = m

    @classmethod
    def identity(cls) -> Homography:
        return cls(np.eye(3))

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.m))

    def allclose(self, other: Homography, atol: float = 1e-6) -> bool:
        return bool(np.allclose(self.m, other.m, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"Homography({self.m.tolist()!r})"


def _check_no_three_collinear(pts: Sequence[Point2], label: str):
    for a, b, c in combinations(pts, 3):
        cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
        if abs(cross) < COLLINEAR_EPS:
            raise DegenerateCorrespondence(f"three collinear {label} points: {a}, {b}, {c}")


def solve_homography(src: Sequence, dst: Sequence) -> Homography:
    """Exact four-point homography with ``m[2, 2]`` fixed to 1.

    Builds the 8x8 system from the four correspondences and solves it directly.
    Raises DegenerateCorrespondence when three points of either set are collinear, or when
    the exact mapping sends the source origin to infinity (no solution with ``m[2, 2] == 1``).
    """
    src = [Point2.of(p) for p in src]
    dst = [Point2.of(p) for p in dst]
    if len(src) != 4 or len(dst) != 4:
        raise GeometryError("need exactly four correspondences")
    _check_no_three_collinear(src, "source")
    _check_no_three_collinear(dst, "destination")
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, (p, q) in enumerate(zip(src, dst)):
        a[2 * i] = [p.x, p.y, 1.0, 0.0, 0.0, 0.0, -q.x * p.x, -q.x * p.y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, p.x, p.y, 1.0, -q.y * p.x, -q.y * p.y]
        b[2 * i] = q.x
        b[2 * i + 1] = q.y
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        raise DegenerateCorrespondence("mapping has m[2, 2] == 0; move the source origin") from None
    return Homography(np.append(h, 1.0).reshape(3, 3))


def apply_homography(m: Homography, p) -> Point2:
    p = Point2.of(p)
    x, y, w = m.m @ np.array([p.x, p.y, 1.0])
    if abs(w) <= W_EPS:
        raise PointAtInfinity(f"{p} maps to infinity")
    return Point2(float(x / w), float(y / w))


def apply_homography_array(m: Homography, pts: np.ndarray) -> np.ndarray:
    """Vectorised ``apply_homography`` over an (n, 2) array."""
    pts = np.asarray(pts, dtype=float)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ m.m.T
    if np.any(np.abs(hom[:, 2]) <= W_EPS):
        raise PointAtInfinity("a point maps to infinity")
    return hom[:, :2] / hom[:, 2:3]


@dataclass(frozen=True)
class ConvexPolygon:
    """Counter-clockwise convex polygon; one or two vertices are a point or a segment."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple(Point2.of(v) for v in self.vertices)
        if not verts:
            raise EmptyInput("polygon needs at least one vertex")
        object.__setattr__(self, "vertices", verts)

    def __len__(self):
        return len(self.vertices)

    def as_array(self) -> np.ndarray:
        return np.array([[v.x, v.y] for v in self.vertices])

    def area(self) -> float:
        if len(self.vertices) < 3:
            return 0.0
        a = self.as_array()
        x, y = a[:, 0], a[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def centroid(self) -> Point2:
        a = self.as_array()
        return Point2(float(a[:, 0].mean()), float(a[:, 1].mean()))

    def edges(self):
        cached = self.__dict__.get("_edges")
        if cached is None:
            n = len(self.vertices)
            if n == 1:
                cached = []
            elif n == 2:
                cached = [(self.vertices[0], self.vertices[1])]
            else:
                cached = [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]
            object.__setattr__(self, "_edges", cached)
        return list(cached)

    def bbox(self) -> tuple:
        """``(xmin, ymin, xmax, ymax)``."""
        cached = self.__dict__.get("_bbox")
        if cached is None:
            xs = [v.x for v in self.vertices]
            ys = [v.y for v in self.vertices]
            cached = (min(xs), min(ys), max(xs), max(ys))
            object.__setattr__(self, "_bbox", cached)
        return cached

    def transformed(self, frame: Frame2) -> ConvexPolygon:
        return ConvexPolygon(tuple(frame.apply(v) for v in self.vertices))

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> ConvexPolygon:
        return cls(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable) -> ConvexPolygon:
    """Monotone-chain hull, CCW, with collinear points pruned.

    Returns a one- or two-vertex polygon when the input is a single point or collinear.
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if not pts:
        raise EmptyInput("convex_hull of no points")
    if len(pts) <= 2:
        return ConvexPolygon(tuple(pts))
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) == 2 or (len(hull) >= 3 and abs(_polygon_area2(hull)) <= 0.0):
        return ConvexPolygon((pts[0], pts[-1]))
    return ConvexPolygon(tuple(hull))


def _polygon_area2(pts) -> float:
    s = 0.0
    for i in range(len(pts)):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % len(pts)]
        s += x0 * y1 - x1 * y0
    return s


def segment_distance(p: Point2, a: Point2, b: Point2) -> float:
    """Distance from ``p`` to the closed segment ``ab``."""
    dx, dy = b.x - a.x, b.y - a.y
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return p.distance_to(a)
    t = max(0.0, min(1.0, ((p.x - a.x) * dx + (p.y - a.y) * dy) / L2))
    return math.hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy))


def point_in_polygon(poly: ConvexPolygon, p) -> bool:
    """True iff ``p`` lies inside or on the boundary of ``poly`` (1e-9 m tolerance)."""
    p = Point2.of(p)
    verts = poly.vertices
    if len(verts) == 1:
        return p.distance_to(verts[0]) <= INSIDE_TOL
    if len(verts) == 2:
        return segment_distance(p, verts[0], verts[1]) <= INSIDE_TOL
    n = len(verts)
    for i in range(n):
        a, b = verts[i], verts[(i + 1) % n]
        ex, ey = b.x - a.x, b.y - a.y
        # signed distance to the edge line; negative means outside for CCW order
        d = (ex * (p.y - a.y) - ey * (p.x - a.x)) / math.hypot(ex, ey)
        if d < -INSIDE_TOL:
            return False
    return True


def polygon_distance(poly: ConvexPolygon, p) -> float:
    """Euclidean distance from ``p`` to ``poly`` (0 when inside)."""
    p = Point2.of(p)
    if point_in_polygon(poly, p):
        return 0.0
    verts = poly.vertices
    if len(verts) == 1:
        return p.distance_to(verts[0])
    return min(segment_distance(p, a, b) for a, b in poly.edges())


def ray_distance_to_polygon(poly: ConvexPolygon, heading: float) -> float:
    """Minimum distance between the ray from the origin along ``heading`` and ``poly``."""
    c, s = math.cos(heading), math.sin(heading)
    verts = poly.vertices
    best = math.inf
    # the minimum over a convex set vs a ray is attained at a vertex or where the ray crosses an edge
    for v in verts:
        t = v.x * c + v.y * s
        if t <= 0.0:
            best = min(best, v.norm())
        else:
            best = min(best, abs(-s * v.x + c * v.y))
    origin = Point2(0.0, 0.0)
    if len(verts) >= 3 and point_in_polygon(poly, origin):
        return 0.0
    for a, b in poly.edges():
        if ray_segment_intersection(0.0, 0.0, c, s, a, b) is not None:
            return 0.0
        best = min(best, segment_distance(origin, a, b))
    return best


def ray_segment_intersection(ox, oy, dx, dy, a: Point2, b: Point2):
    """Ray parameter ``t >= 0`` where ``o + t d`` meets segment ``ab``, or None."""
    ex, ey = b.x - a.x, b.y - a.y
    den = dx * ey - dy * ex
    if abs(den) < 1e-15:
        return None
    wx, wy = a.x - ox, a.y - oy
    t = (wx * ey - wy * ex) / den
    u = (wx * dy - wy * dx) / den
    if t >= 0.0 and -1e-12 <= u <= 1.0 + 1e-12:
        return t
    return None
