"""Velocity commands: goal seeking with freezing-zone avoidance, pursuit and lawnmower patrol."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .geometry import (ConvexPolygon, Point2, convex_hull, normalize_angle, point_in_polygon, polygon_distance,
                       ray_distance_to_polygon, segment_distance)
from .perception import Source
from .sensors import LidarScan
from .simworld import RobotState

DEVIATION_EPS = 1e-6


class NavigationError(RuntimeError):
    pass


class LockLost(NavigationError):
    pass


class SpacingTooWide(NavigationError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    horizon: float = 1.0
    trigger_distance: float = 3.0
    stop_distance: float = 0.5
    stop_cone: float = math.radians(15.0)
    heading_gain: float = 2.0
    min_ped_speed: float = 0.05
    standoff: float = 2.0
    rotate_fraction: float = 0.8  # of half the camera FOV
    waypoint_reach: float = 0.3
    crumb_lookahead: float = 0.5
    route_clearance: float = 0.45
    # added to the robot radius when inflating the PFZ: hull points are body centres
    pfz_margin: float = 0.35

    def pfz_inflation(self, robot) -> float:
        return robot.radius + self.pfz_margin


@dataclass(frozen=True)
class VelocityCommand:
    v: float
    w: float
    heading: float = 0.0  # commanded direction, robot frame
    avoiding: bool = False  # heading was bent around a freezing zone
    side: int = 0  # +1 passed on the left, -1 on the right, 0 not avoiding

    def clamped(self, v_max: float, w_max: float) -> VelocityCommand:
        return VelocityCommand(float(np.clip(self.v, -v_max, v_max)), float(np.clip(self.w, -w_max, w_max)),
                               self.heading, self.avoiding, self.side)


STOP = VelocityCommand(0.0, 0.0)


@dataclass(frozen=True)
class PlannerInput:
    goal: Point2
    lidar: Optional[LidarScan] = None
    vel: tuple = (0.0, 0.0)
    side: int = 0  # keep passing on this side (+1 left, -1 right); 0 picks the smaller turn


@dataclass(frozen=True)
class FreezingZone:
    hull: Optional[ConvexPolygon]
    horizon: float
    contributors: tuple = ()
    nearest: float = math.inf  # distance from the robot to the hull

    @property
    def empty(self) -> bool:
        return self.hull is None


def _ped_items(peds):
    if isinstance(peds, Mapping):
        return [(k, Point2.of(p), Point2.of(v)) for k, (p, v) in peds.items()]
    return [(i, Point2.of(p), Point2.of(v)) for i, (p, v) in enumerate(peds)]


def build_pfz(peds, robot: Optional[RobotState] = None, horizon: float = 1.0,
              min_speed: float = 0.05) -> FreezingZone:
    """Hull of the predicted positions of pedestrians that may freeze the robot.

    ``peds`` holds robot-frame ``(position, velocity)`` pairs, as a sequence or keyed by ID.
    A pedestrian contributes when it moves faster than ``min_speed``, is in front of the
    robot and is closing in on it.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    ids, pts = [], []
    for pid, p, v in _ped_items(peds):
        speed = v.norm()
        if speed <= min_speed or p.x <= 0.0:
            continue
        r = p.norm()
        closing = -(p.x * v.x + p.y * v.y) / r if r > 0 else speed
        if closing <= 0.0:
            continue
        ids.append(pid)
        pts.append((p.x + v.x * horizon, p.y + v.y * horizon))
    if not pts:
        return FreezingZone(None, horizon)
    hull = convex_hull(pts)
    return FreezingZone(hull, horizon, tuple(ids), polygon_distance(hull, Point2(0.0, 0.0)))


def blocked_interval(hull: ConvexPolygon, inflate: float, reference: float):
    """Directions (relative to ``reference``) whose rays meet ``hull`` grown by ``inflate``.

    Returns ``(lo, hi)`` or None when the origin is inside the grown hull.
    """
    origin = Point2(0.0, 0.0)
    if polygon_distance(hull, origin) <= inflate:
        return None
    # measure around the centroid direction so the span never wraps through +-pi
    base = hull.centroid().angle()
    lo, hi = math.inf, -math.inf
    for v in hull.vertices:
        a = normalize_angle(v.angle() - base)
        half = math.asin(inflate / v.norm())
        lo, hi = min(lo, a - half), max(hi, a + half)
    shift = normalize_angle(base - reference)
    return lo + shift, hi + shift


def ray_hits(hull: ConvexPolygon, heading: float, inflate: float) -> bool:
    return ray_distance_to_polygon(hull, heading) <= inflate


def _lidar_blocked(scan: LidarScan, direction: float, cone: float, stop: float) -> bool:
    rel = np.abs((scan.angles - direction + np.pi) % (2 * np.pi) - np.pi)
    near = scan.ranges[rel <= cone]
    return bool(near.size and np.min(near) < stop)


def baseline_plan(inp: PlannerInput, pfz: FreezingZone, robot: RobotState,
                  cfg: PlannerConfig = PlannerConfig()) -> VelocityCommand:
    """Deterministic stand-in for a learned local planner."""
    goal = inp.goal
    heading = math.atan2(goal.y, goal.x) if goal.norm() > 0 else 0.0
    avoiding, side = False, 0
    inflate = cfg.pfz_inflation(robot)
    if not pfz.empty and pfz.nearest < cfg.trigger_distance and ray_hits(pfz.hull, heading, inflate):
        iv = blocked_interval(pfz.hull, inflate, heading)
        if iv is not None:
            lo, hi = iv
            # smaller rotation wins, right (negative) on a tie; a side already taken is kept so
            # noisy tracks do not flip the swerve back and forth
            side = inp.side or (1 if hi < -lo else -1)
            heading = normalize_angle(heading + (hi + DEVIATION_EPS if side > 0 else lo - DEVIATION_EPS))
            avoiding = True
    err = heading
    w = float(np.clip(cfg.heading_gain * err, -robot.w_max, robot.w_max))
    v = robot.v_max * max(0.0, math.cos(err))
    if inp.lidar is not None and v > 0.0:
        for direction in (heading, 0.0):
            if _lidar_blocked(inp.lidar, direction, cfg.stop_cone, cfg.stop_distance):
                v = 0.0
                break
    return VelocityCommand(v, w, heading, avoiding, side)


def pursue(goal: Optional[Point2], source: Optional[Source], robot: RobotState, pfz: FreezingZone,
           lidar: Optional[LidarScan] = None, fov: float = math.radians(70.0),
           cfg: PlannerConfig = PlannerConfig(), steer: Optional[Point2] = None,
           side: int = 0) -> VelocityCommand:
    """Chase the locked pedestrian at ``goal`` (robot frame) and hold the stand-off distance.

    ``steer`` optionally replaces the point steered toward (a trail point or route
    waypoint) while ``goal`` still decides the stand-off and camera-keeping rules.
    """
    if goal is None:
        raise LockLost("no goal for the locked pedestrian")
    bearing = math.atan2(goal.y, goal.x)
    if source == Source.RGBD and abs(bearing) > cfg.rotate_fraction * fov / 2.0:
        return VelocityCommand(0.0, math.copysign(robot.w_max, bearing), bearing)
    if goal.norm() <= cfg.standoff:
        w = float(np.clip(cfg.heading_gain * bearing, -robot.w_max, robot.w_max))
        return VelocityCommand(0.0, w, bearing)
    target = steer if steer is not None else goal
    cmd = baseline_plan(PlannerInput(target, lidar, side=side), pfz, robot, cfg)
    # ease into the stand-off ring, creeping at the end so it is actually reached
    v = min(cmd.v, max(0.1, (goal.norm() - cfg.standoff) * 2.0))
    return VelocityCommand(v, cmd.w, cmd.heading, cmd.avoiding, cmd.side)


class Breadcrumbs:
    """Map-frame trail of the attended group's centroid, followed by pure pursuit."""

    def __init__(self, lookahead: float = 0.5, spacing: float = 0.1):
        self.lookahead = lookahead
        self.spacing = spacing
        self.trail: list = []

    def clear(self):
        self.trail = []

    def add(self, p: Point2):
        if not self.trail or self.trail[-1].distance_to(p) >= self.spacing:
            self.trail.append(p)

    def target(self, robot_pos: Point2) -> Optional[Point2]:
        if not self.trail:
            return None
        # drop the prefix the robot has already reached
        k = 0
        for i, c in enumerate(self.trail):
            if c.distance_to(robot_pos) < self.lookahead:
                k = i + 1
        self.trail = self.trail[k:] if k < len(self.trail) else self.trail[-1:]
        return self.trail[0]


# --- routing around obstacles ---------------------------------------------------------------

def _segments_intersect(p, q, a, b) -> bool:
    def orient(o, x, y):
        return (x.x - o.x) * (y.y - o.y) - (x.y - o.y) * (y.x - o.x)
    d1, d2 = orient(a, b, p), orient(a, b, q)
    d3, d4 = orient(p, q, a), orient(p, q, b)
    return d1 * d2 < 0 and d3 * d4 < 0


def segment_polygon_distance(p: Point2, q: Point2, poly: ConvexPolygon) -> float:
    if point_in_polygon(poly, p) or point_in_polygon(poly, q):
        return 0.0
    best = math.inf
    for a, b in poly.edges():
        if _segments_intersect(p, q, a, b):
            return 0.0
        best = min(best, segment_distance(a, p, q), segment_distance(b, p, q),
                   segment_distance(p, a, b), segment_distance(q, a, b))
    return best


def _grown_vertices(poly: ConvexPolygon, d: float) -> list:
    verts = poly.vertices
    n = len(verts)
    out = []
    for i in range(n):
        prev, cur, nxt = verts[i - 1], verts[i], verts[(i + 1) % n]
        n1 = _outward(prev, cur)
        n2 = _outward(cur, nxt)
        bx, by = n1[0] + n2[0], n1[1] + n2[1]
        norm = math.hypot(bx, by)
        cos_half = norm / 2.0
        k = d / max(cos_half, 1e-3) / norm
        out.append(Point2(cur.x + bx * k, cur.y + by * k))
    return out


def _outward(a: Point2, b: Point2):
    ex, ey = b.x - a.x, b.y - a.y
    L = math.hypot(ex, ey)
    return (ey / L, -ex / L)  # right normal is outward for CCW polygons


class Roadmap:
    """Visibility graph over the grown corners of convex obstacles.

    Corner-to-corner edges are computed once; each query only links the start and goal.
    """

    def __init__(self, obstacles: Sequence, clearance: float):
        self.polys = [o.polygon if hasattr(o, "polygon") else o for o in obstacles]
        self.clearance = clearance
        self.tol = clearance - 1e-6
        self.boxes = [(min(v.x for v in q.vertices), min(v.y for v in q.vertices),
                       max(v.x for v in q.vertices), max(v.y for v in q.vertices)) for q in self.polys]
        nodes = []
        for poly in self.polys:
            if len(poly) < 3:
                continue
            for v in _grown_vertices(poly, clearance * 1.05):
                if all(polygon_distance(other, v) >= self.tol for other in self.polys):
                    nodes.append(v)
        self.nodes = nodes
        self.adj = {i: [] for i in range(len(nodes))}
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                if self._clear(nodes[i], nodes[j]):
                    d = nodes[i].distance_to(nodes[j])
                    self.adj[i].append((j, d))
                    self.adj[j].append((i, d))

    def _clear(self, p, q, start_slack: bool = False) -> bool:
        for poly, (x0, y0, x1, y1) in zip(self.polys, self.boxes):
            tol = self.tol
            # cheap reject: the segment's box stays clear of the obstacle's box
            if (min(p.x, q.x) - tol > x1 or max(p.x, q.x) + tol < x0
                    or min(p.y, q.y) - tol > y1 or max(p.y, q.y) + tol < y0):
                continue
            if start_slack:
                # a start already closer than the clearance may still leave
                tol = min(tol, polygon_distance(poly, p) - 1e-6)
            if segment_polygon_distance(p, q, poly) < tol:
                return False
        return True

    def clear_from(self, start: Point2, goal: Point2) -> bool:
        """Straight segment keeps the clearance (a start already inside it may still leave)."""
        return self._clear(start, goal, True)

    def route(self, start: Point2, goal: Point2) -> list:
        """Waypoints after ``start`` ending with ``goal``; ``[goal]`` if unobstructed or unreachable."""
        if self._clear(start, goal, True):
            return [goal]
        n = len(self.nodes)
        s_id, g_id = n, n + 1
        links = {s_id: [], g_id: []}
        for i, v in enumerate(self.nodes):
            if self._clear(start, v, True):
                links[s_id].append((i, start.distance_to(v)))
            if self._clear(v, goal):
                links.setdefault(i, []).append((g_id, v.distance_to(goal)))
        pos = self.nodes + [start, goal]
        dist = {s_id: 0.0}
        prev: dict = {}
        heap = [(0.0, s_id)]
        done = set()
        while heap:
            d, i = heapq.heappop(heap)
            if i in done:
                continue
            done.add(i)
            if i == g_id:
                break
            for j, w in self.adj.get(i, []) + links.get(i, []):
                nd = d + w
                if nd < dist.get(j, math.inf) - 1e-12:
                    dist[j] = nd
                    prev[j] = i
                    heapq.heappush(heap, (nd, j))
        if g_id not in prev:
            return [goal]
        path = [g_id]
        while path[-1] != s_id:
            path.append(prev[path[-1]])
        return [pos[k] for k in reversed(path[:-1])]


def route(start: Point2, goal: Point2, obstacles: Sequence, clearance: float) -> list:
    """Shortest path from ``start`` to ``goal`` around convex obstacles (see Roadmap)."""
    return Roadmap(obstacles, clearance).route(start, goal)


# --- lawnmower -------------------------------------------------------------------------------

@dataclass(frozen=True)
class LawnmowerPlan:
    waypoints: tuple
    lane_spacing: float
    region: tuple  # (x0, y0, x1, y1), map frame
    footprint: Optional[tuple] = None
    sensor_range: float = 5.0


def _lane_segments(x0, x1, y, footprint):
    if footprint is None:
        return [(x0, x1)]
    fx0, fy0, fx1, fy1 = footprint
    if not fy0 < y < fy1 or fx1 <= x0 or fx0 >= x1:
        return [(x0, x1)]
    segs = []
    if fx0 > x0:
        segs.append((x0, fx0))
    if fx1 < x1:
        segs.append((fx1, x1))
    return segs


def coverage_cells(region, footprint=None, obstacles: Sequence = (), cell: float = 0.25) -> np.ndarray:
    """Centres of the grid cells that must be seen: inside the region, outside the footprint."""
    x0, y0, x1, y1 = region
    xs = np.arange(x0 + cell / 2, x1, cell)
    ys = np.arange(y0 + cell / 2, y1, cell)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    keep = np.ones(len(pts), dtype=bool)
    if footprint is not None:
        fx0, fy0, fx1, fy1 = footprint
        keep &= ~((pts[:, 0] > fx0) & (pts[:, 0] < fx1) & (pts[:, 1] > fy0) & (pts[:, 1] < fy1))
    for o in obstacles:
        poly = o.polygon if hasattr(o, "polygon") else o
        inside = np.array([point_in_polygon(poly, (x, y)) for x, y in pts[keep]])
        idx = np.flatnonzero(keep)
        keep[idx[inside]] = False
    return pts[keep]


def path_distances(points: np.ndarray, waypoints: Sequence[Point2]) -> np.ndarray:
    """Distance from each point to the polyline through ``waypoints``."""
    w = np.array([[p.x, p.y] for p in waypoints], dtype=float)
    if len(w) == 1:
        return np.hypot(points[:, 0] - w[0, 0], points[:, 1] - w[0, 1])
    best = np.full(len(points), np.inf)
    for a, b in zip(w[:-1], w[1:]):
        d = b - a
        L2 = float(d @ d)
        if L2 == 0.0:
            t = np.zeros(len(points))
        else:
            t = np.clip(((points - a) @ d) / L2, 0.0, 1.0)
        proj = a + t[:, None] * d
        best = np.minimum(best, np.hypot(*(points - proj).T))
    return best


def check_coverage(plan: LawnmowerPlan, obstacles: Sequence = (), cell: float = 0.25):
    """Fraction of required cells within sensor range of the path, and the uncovered cells."""
    cells = coverage_cells(plan.region, plan.footprint, obstacles, cell)
    if len(cells) == 0:
        return 1.0, cells
    d = path_distances(cells, plan.waypoints)
    missed = cells[d > plan.sensor_range + 1e-9]
    return 1.0 - len(missed) / len(cells), missed


def lawnmower_waypoints(region, footprint=None, lane_spacing: Optional[float] = None,
                        sensor_range: float = 5.0, obstacles: Sequence = (),
                        cell: float = 0.25) -> LawnmowerPlan:
    """Back-and-forth lanes along x over ``region`` with the footprint cut out of each lane.

    ``region`` and ``footprint`` are axis-aligned ``(x0, y0, x1, y1)`` boxes. Lane spacing
    defaults to the sensor range. Raises SpacingTooWide if any required grid cell is
    farther than ``sensor_range`` from the path.
    """
    x0, y0, x1, y1 = region
    if not (x1 > x0 and y1 > y0):
        raise ValueError("region must have positive extent")
    spacing = sensor_range if lane_spacing is None else lane_spacing
    if spacing <= 0:
        raise ValueError("lane_spacing must be positive")
    n = max(1, math.ceil((y1 - y0) / spacing - 1e-9))
    step = (y1 - y0) / n
    waypoints = []
    for i in range(n):
        y = y0 + (i + 0.5) * step
        segs = _lane_segments(x0, x1, y, footprint)
        pts = [Point2(x, y) for s in segs for x in s]
        if i % 2 == 1:
            pts.reverse()
        waypoints.extend(pts)
    if not waypoints:
        raise SpacingTooWide("no lane lies outside the footprint")
    plan = LawnmowerPlan(tuple(waypoints), spacing, tuple(region), footprint and tuple(footprint), sensor_range)
    frac, missed = check_coverage(plan, obstacles, cell)
    if len(missed):
        raise SpacingTooWide(f"{len(missed)} cells uncovered ({100 * frac:.1f}% covered) at spacing {spacing}")
    return plan


@dataclass
class LawnmowerFollower:
    """Cycles through the plan's waypoints, reversing direction at either end."""

    plan: LawnmowerPlan
    reach: float = 0.3
    index: int = 0
    direction: int = 1
    laps: int = field(default=0)

    def current(self, robot_pos: Point2) -> Point2:
        wps = self.plan.waypoints
        if len(wps) == 1:
            return wps[0]
        while robot_pos.distance_to(wps[self.index]) < self.reach:
            nxt = self.index + self.direction
            if not 0 <= nxt < len(wps):
                self.direction = -self.direction
                self.laps += 1
                nxt = self.index + self.direction
            self.index = nxt
        return wps[self.index]

    def carrot(self, robot_pos: Point2, lookahead: float = 1.0) -> Point2:
        """A point ``lookahead`` metres down the current lane, so the robot converges onto it."""
        b = self.current(robot_pos)
        prev = self.index - self.direction
        if not 0 <= prev < len(self.plan.waypoints):
            return b
        a = self.plan.waypoints[prev]
        ex, ey = b.x - a.x, b.y - a.y
        L = math.hypot(ex, ey)
        if L < 1e-9:
            return b
        along = ((robot_pos.x - a.x) * ex + (robot_pos.y - a.y) * ey) / L
        u = min(1.0, max(0.0, (along + lookahead) / L))
        return Point2(a.x + u * ex, a.y + u * ey)

    def skip(self):
        """Give up on the current waypoint, e.g. when someone is standing on it."""
        wps = self.plan.waypoints
        nxt = self.index + self.direction
        if not 0 <= nxt < len(wps):
            self.direction = -self.direction
            self.laps += 1
            nxt = self.index + self.direction
        self.index = max(0, min(len(wps) - 1, nxt))

    def nearest_restart(self, robot_pos: Point2):
        wps = self.plan.waypoints
        self.index = min(range(len(wps)), key=lambda i: (robot_pos.distance_to(wps[i]), i))
