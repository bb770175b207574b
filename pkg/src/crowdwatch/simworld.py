"""Ground-truth world: obstacles, scripted pedestrians, a unicycle robot and fixed-step stepping."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import ConvexPolygon, Frame2, Point2, normalize_angle, polygon_distance

MAX_PED_SPEED = 2.0
PED_RADIUS_RANGE = (0.2, 0.5)
BODY_HEIGHT = 1.7
DEFAULT_DT = 0.1
ARRIVE_EPS = 1e-9
ANGLE_EPS = 1e-9


@dataclass(frozen=True)
class Obstacle:
    polygon: ConvexPolygon


@dataclass(frozen=True)
class ScriptLeg:
    """Walk to ``target`` at ``speed`` m/s, then stand for ``wait`` s.

    A leg with no target is a pure wait at the current position.
    """

    target: Optional[Point2]
    speed: float = 0.0
    wait: float = 0.0


@dataclass(frozen=True)
class Pedestrian:
    id: int
    position: Point2
    velocity: Point2 = Point2(0.0, 0.0)
    radius: float = 0.3
    script: tuple = ()
    household_tag: Optional[int] = None
    # script progress: index of the active leg, seconds already waited in it, walking done
    leg: int = 0
    waited: float = 0.0
    arrived: bool = False

    def __post_init__(self):
        lo, hi = PED_RADIUS_RANGE
        if not lo <= self.radius <= hi:
            raise ValueError(f"pedestrian {self.id}: radius {self.radius} outside [{lo}, {hi}]")
        for leg in self.script:
            if leg.speed < 0 or leg.speed > MAX_PED_SPEED:
                raise ValueError(f"pedestrian {self.id}: leg speed {leg.speed} outside [0, 2]")
            if leg.target is not None and leg.speed <= 0:
                raise ValueError(f"pedestrian {self.id}: a walking leg needs positive speed")

    @property
    def finished(self) -> bool:
        return self.leg >= len(self.script)

    def advance(self, dt: float) -> Pedestrian:
        if self.leg >= len(self.script) and self.velocity.x == 0.0 and self.velocity.y == 0.0:
            return self
        pos = self.position
        leg_i, waited, arrived = self.leg, self.waited, self.arrived
        budget = dt
        moving_dir = None
        speed = 0.0
        while budget > 1e-12 and leg_i < len(self.script):
            leg = self.script[leg_i]
            if leg.target is not None and not arrived:
                remaining = pos.distance_to(leg.target)
                step = leg.speed * budget
                if remaining <= step + ARRIVE_EPS:
                    budget -= remaining / leg.speed
                    pos = leg.target
                    arrived = True
                    moving_dir = None
                    continue
                ux = (leg.target.x - pos.x) / remaining
                uy = (leg.target.y - pos.y) / remaining
                pos = Point2(pos.x + ux * step, pos.y + uy * step)
                moving_dir, speed = (ux, uy), leg.speed
                budget = 0.0
                break
            # standing phase of the leg
            left = leg.wait - waited
            if left > budget + 1e-12:
                waited += budget
                budget = 0.0
                break
            budget -= max(left, 0.0)
            leg_i, waited, arrived = leg_i + 1, 0.0, False
        if moving_dir is None:
            vel = Point2(0.0, 0.0)
        else:
            vel = Point2(moving_dir[0] * speed, moving_dir[1] * speed)
        return replace(self, position=pos, velocity=vel, leg=leg_i, waited=waited, arrived=arrived)


@dataclass(frozen=True)
class RobotState:
    pose: Frame2 = field(default_factory=Frame2)
    linear_vel: float = 0.0
    angular_vel: float = 0.0
    v_max: float = 0.75
    w_max: float = 0.75
    radius: float = 0.2

    @property
    def position(self) -> Point2:
        return self.pose.translation

    @property
    def heading(self) -> float:
        return self.pose.rotation


@dataclass(frozen=True)
class WorldState:
    pedestrians: tuple
    robot: RobotState
    obstacles: tuple = ()
    dt: float = DEFAULT_DT
    step_count: int = 0
    rng_seed: int = 0
    bounds: tuple = (0.0, 0.0, 10.0, 10.0)
    safety_margin: float = 0.05
    halted: bool = False
    clearance: float = math.inf  # robot clearance after the last step

    def __post_init__(self):
        if not 0.0 < self.dt <= 0.5:
            raise ValueError(f"dt must lie in (0, 0.5], got {self.dt}")
        ids = [p.id for p in self.pedestrians]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate pedestrian ids")

    @property
    def time(self) -> float:
        return self.step_count * self.dt

    def pedestrian(self, pid: int) -> Pedestrian:
        for p in self.pedestrians:
            if p.id == pid:
                return p
        raise KeyError(pid)


def robot_clearance(position: Point2, radius: float, pedestrians: Sequence[Pedestrian],
                    obstacles: Sequence[Obstacle]) -> float:
    """Smallest gap between the robot disk edge and any pedestrian disk or obstacle."""
    gap = math.inf
    for p in pedestrians:
        gap = min(gap, position.distance_to(p.position) - p.radius - radius)
    for o in obstacles:
        x0, y0, x1, y1 = o.polygon.bbox()
        # the box distance is a lower bound on the polygon distance
        if math.hypot(max(x0 - position.x, 0.0, position.x - x1),
                      max(y0 - position.y, 0.0, position.y - y1)) - radius >= gap:
            continue
        gap = min(gap, polygon_distance(o.polygon, position) - radius)
    return gap


def step(world: WorldState, cmd) -> WorldState:
    """Advance the world by one ``dt``.

    ``cmd`` is anything with ``v`` and ``w`` attributes; it is clamped to the robot limits.
    The robot keeps its position (but still turns) when the translation would bring it
    inside the safety margin of a pedestrian disk or obstacle.
    """
    dt = world.dt
    peds = tuple(p.advance(dt) for p in world.pedestrians)
    r = world.robot
    v = float(np.clip(cmd.v, -r.v_max, r.v_max))
    w = float(np.clip(cmd.w, -r.w_max, r.w_max))
    th = r.pose.rotation
    cand = Point2(r.pose.x + v * math.cos(th) * dt, r.pose.y + v * math.sin(th) * dt)
    halted = False
    gap = None
    if v != 0.0:
        need = world.safety_margin
        gap = robot_clearance(cand, r.radius, peds, world.obstacles)
        if gap < need:
            old_gap = robot_clearance(r.pose.translation, r.radius, peds, world.obstacles)
            if gap < old_gap:
                cand, v, halted, gap = r.pose.translation, 0.0, True, old_gap
    if gap is None:
        gap = robot_clearance(cand, r.radius, peds, world.obstacles)
    robot = replace(r, pose=Frame2(th + w * dt, cand), linear_vel=v, angular_vel=w)
    return replace(world, pedestrians=peds, robot=robot, step_count=world.step_count + 1,
                   halted=halted, clearance=gap)


# --- occlusion -------------------------------------------------------------------------------

def _vertical_cover(eye_height: Optional[float], d_target: float, d_blocker: float,
                    body_height: float) -> float:
    """Fraction of the target's height hidden behind a body-height blocker."""
    if eye_height is None or eye_height <= body_height:
        return 1.0
    z = eye_height - (eye_height - body_height) * d_target / d_blocker
    return min(1.0, max(0.0, z / body_height))


def _segment_within(eye: Point2, a: Point2, b: Point2, radius: float):
    """Part of segment ``ab`` within ``radius`` of ``eye``, or None."""
    ex, ey = b.x - a.x, b.y - a.y
    fx, fy = a.x - eye.x, a.y - eye.y
    qa = ex * ex + ey * ey
    qb = 2.0 * (fx * ex + fy * ey)
    qc = fx * fx + fy * fy - radius * radius
    if qa == 0.0:
        return (a, a) if qc <= 0 else None
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    u0 = max(0.0, (-qb - sq) / (2 * qa))
    u1 = min(1.0, (-qb + sq) / (2 * qa))
    if u0 >= u1:
        return None
    return Point2(a.x + u0 * ex, a.y + u0 * ey), Point2(a.x + u1 * ex, a.y + u1 * ey)


def visible_fraction(eye, target: Pedestrian, blockers: Sequence[Pedestrian] = (),
                     obstacles: Sequence[Obstacle] = (), eye_height: Optional[float] = None,
                     body_height: float = BODY_HEIGHT) -> float:
    """Share of the target's silhouette seen from ``eye``.

    Works on the angular interval the target disk subtends. A pedestrian whose centre is
    nearer than the target hides its own angular interval; an obstacle hides the directions
    in which its boundary lies nearer than the target centre. With an elevated eye
    (``eye_height`` above ``body_height``) a pedestrian blocker hides only the lower part of
    the target, so the covered measure is weighted by that vertical share.
    """
    eye = Point2.of(eye)
    d_t = eye.distance_to(target.position)
    if d_t <= target.radius:
        return 1.0
    beta = (target.position - eye).angle()
    half = math.asin(target.radius / d_t)
    intervals = []  # (lo, hi, cover) relative to beta

    def add(lo, hi, cover):
        lo, hi = max(lo, -half), min(hi, half)
        if hi > lo and cover > 0.0:
            intervals.append((lo, hi, cover))

    for b in blockers:
        if b.id == target.id:
            continue
        d_b = eye.distance_to(b.position)
        if d_b >= d_t:
            continue
        if d_b <= b.radius:
            return 0.0
        delta = normalize_angle((b.position - eye).angle() - beta)
        a_b = math.asin(b.radius / d_b)
        add(delta - a_b, delta + a_b, _vertical_cover(eye_height, d_t, d_b, body_height))
    for o in obstacles:
        for a, b in o.polygon.edges():
            clipped = _segment_within(eye, a, b, d_t)
            if clipped is None:
                continue
            p0, p1 = clipped
            t0 = normalize_angle((p0 - eye).angle() - beta)
            sweep = normalize_angle((p1 - eye).angle() - beta - t0)
            lo, hi = min(t0, t0 + sweep), max(t0, t0 + sweep)
            # the swept arc may straddle the +-pi seam
            for shift in (0.0, 2 * math.pi, -2 * math.pi):
                add(lo + shift, hi + shift, 1.0)
    if not intervals:
        return 1.0
    cuts = sorted({-half, half, *[i[0] for i in intervals], *[i[1] for i in intervals]})
    covered = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        c = max((iv[2] for iv in intervals if iv[0] <= mid <= iv[1]), default=0.0)
        covered += (hi - lo) * c
    frac = 1.0 - covered / (2.0 * half)
    return min(1.0, max(0.0, frac))
