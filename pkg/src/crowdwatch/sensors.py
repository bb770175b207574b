"""Synthetic sensors: RGB-D detections + depth, CCTV detections, and a 2-D lidar.

Detections are rendered from ground truth with an occlusion test instead of running a
neural detector. Track IDs equal the ground-truth pedestrian IDs unless an
``IdAssigner`` re-labels pedestrians that leave and re-enter a camera's view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    ConvexPolygon,
    Frame2,
    Homography,
    Point2,
    apply_homography,
    point_in_polygon,
    solve_homography,
)
from .simworld import BODY_HEIGHT, Pedestrian, RobotState, WorldState, visible_fraction

NO_RETURN = math.inf
VISIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class BoundingBox:
    top_left: Point2
    width: float
    height: float
    ped_id: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"degenerate box for pedestrian {self.ped_id}")

    @property
    def centroid(self) -> Point2:
        return Point2(self.top_left.x + self.width / 2.0, self.top_left.y + self.height / 2.0)

    @property
    def bottom_left(self) -> Point2:
        return Point2(self.top_left.x, self.top_left.y + self.height)

    @property
    def bottom_right(self) -> Point2:
        return Point2(self.top_left.x + self.width, self.top_left.y + self.height)


@dataclass(frozen=True, eq=False)
class DepthImage:
    pixels: np.ndarray  # (h, w) metres, NO_RETURN where nothing valid was measured
    near: float
    far: float

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def valid_mask(self) -> np.ndarray:
        return (self.pixels > self.near) & (self.pixels < self.far)


@dataclass(frozen=True)
class RgbdCameraModel:
    fov: float = math.radians(70.0)
    range: float = 5.0
    near: float = 0.3
    width: int = 640
    height: int = 480
    mount: Frame2 = field(default_factory=Frame2)
    mount_height: float = 1.0
    noise_sigma_depth: float = 0.02
    min_visible: float = 0.5
    depth_quantum: float = 0.001

    def __post_init__(self):
        if not 0.0 < self.fov < math.pi:
            raise ValueError("RGB-D fov must lie in (0, pi)")
        if not self.near < self.range:
            raise ValueError("RGB-D near distance must be below range")

    @property
    def px_per_rad(self) -> float:
        return self.width / self.fov

    def column_of(self, bearing):
        """Image column for a camera-frame bearing (left positive), linear in angle."""
        return self.width / 2.0 - bearing * self.px_per_rad

    def bearing_of(self, column):
        return (self.width / 2.0 - column) / self.width * self.fov

    def row_of(self, elevation):
        return self.height / 2.0 - elevation * self.px_per_rad

    def eye(self, robot: RobotState) -> Frame2:
        return robot.pose.compose(self.mount)


@dataclass(frozen=True)
class CctvCameraModel:
    """Fixed elevated camera whose ground plane is rectified with a four-point homography.

    ``homography`` maps angled-view pixels to top-view pixels; ``scale`` is metres per
    top-view pixel; ``gnd_to_map`` places the ground frame (origin at rectangle corner 1)
    in the map.
    """

    homography: Homography
    scale: float
    gnd_to_map: Frame2
    footprint: ConvexPolygon
    rect_size: tuple
    width: int = 1920
    height: int = 1080
    eye: Point2 = Point2(0.0, 0.0)
    eye_height: float = 3.0
    min_visible: float = 0.5
    top_origin: Point2 = Point2(0.0, 0.0)

    @classmethod
    def from_corners(cls, corners_px, rect_size, scale, gnd_to_map: Frame2, *,
                     resolution=(1920, 1080), eye=(0.0, 0.0), eye_height=3.0,
                     min_visible=0.5) -> CctvCameraModel:
        """Build the camera from the angled-view pixels of the homography rectangle corners.

        Corners are ordered 1..4: ground (0, 0), (W, 0), (W, H), (0, H).
        """
        w_m, h_m = rect_size
        top = [(0.0, 0.0), (w_m / scale, 0.0), (w_m / scale, h_m / scale), (0.0, h_m / scale)]
        m = solve_homography(corners_px, top)
        footprint = ConvexPolygon.rectangle(0.0, 0.0, w_m, h_m).transformed(gnd_to_map)
        return cls(m, scale, gnd_to_map, footprint, (float(w_m), float(h_m)),
                   int(resolution[0]), int(resolution[1]), Point2.of(eye), float(eye_height),
                   float(min_visible))

    def __post_init__(self):
        w_m, h_m = self.rect_size
        expect = ConvexPolygon.rectangle(0.0, 0.0, w_m, h_m).transformed(self.gnd_to_map)
        for a, b in zip(expect.vertices, self.footprint.vertices):
            if a.distance_to(b) > 1e-6:
                raise ValueError("CCTV footprint inconsistent with gnd_to_map and rectangle")

    def ground_to_angled(self, gnd: Point2) -> Point2:
        top = Point2(self.top_origin.x + gnd.x / self.scale, self.top_origin.y + gnd.y / self.scale)
        return apply_homography(self.inverse_homography, top)

    @property
    def inverse_homography(self) -> Homography:
        inv = self.__dict__.get("_inv")
        if inv is None:
            inv = self.homography.inverse()
            object.__setattr__(self, "_inv", inv)
        return inv


@dataclass(frozen=True, eq=False)
class LidarScan:
    ranges: np.ndarray
    angles: np.ndarray  # relative to the robot heading
    max_range: float


@dataclass(frozen=True)
class LidarModel:
    fov: float = math.radians(240.0)
    beams: int = 241
    max_range: float = 5.6

    def beam_angles(self) -> np.ndarray:
        cached = self.__dict__.get("_angles")
        if cached is None:
            cached = np.linspace(-self.fov / 2.0, self.fov / 2.0, self.beams)
            cached.flags.writeable = False
            object.__setattr__(self, "_angles", cached)
        return cached


# --- ray casting ---------------------------------------------------------------------------

_edge_cache: list = [None, None]


def _obstacle_edges(obstacles) -> np.ndarray:
    # worlds keep the same obstacle tuple from step to step
    if _edge_cache[0] is obstacles:
        return _edge_cache[1]
    edges = [(a.x, a.y, b.x, b.y) for o in obstacles for a, b in o.polygon.edges()]
    arr = np.array(edges, dtype=float).reshape(-1, 4)
    _edge_cache[0], _edge_cache[1] = obstacles, arr
    return arr


def cast_rays(origin: Point2, angles: np.ndarray, edges: np.ndarray,
              disks: Optional[np.ndarray] = None, max_range: float = math.inf) -> np.ndarray:
    """Distance along each world-frame ray to the first edge or disk hit (inf if none).

    ``edges`` is (E, 4) ``x0, y0, x1, y1``; ``disks`` is (D, 3) ``cx, cy, r``. Hits beyond
    ``max_range`` may be reported as inf.
    """
    angles = np.asarray(angles, dtype=float)
    c, s = np.cos(angles), np.sin(angles)
    best = np.full(angles.shape, np.inf)
    if len(edges) and math.isfinite(max_range):
        # drop edges whose bounding box lies out of range
        lo = np.minimum(edges[:, :2], edges[:, 2:])
        hi = np.maximum(edges[:, :2], edges[:, 2:])
        gap = np.maximum(np.maximum(lo - (origin.x, origin.y), (origin.x, origin.y) - hi), 0.0)
        edges = edges[np.hypot(gap[:, 0], gap[:, 1]) <= max_range]
    if len(edges):
        wx, wy = edges[:, 0] - origin.x, edges[:, 1] - origin.y
        ex, ey = edges[:, 2] - edges[:, 0], edges[:, 3] - edges[:, 1]
        den = np.multiply.outer(c, ey) - np.multiply.outer(s, ex)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / den
            t = (wx * ey - wy * ex) * inv
            u = (np.multiply.outer(s, wx) - np.multiply.outer(c, wy)) * inv
        ok = (t >= 0.0) & (u >= -1e-12) & (u <= 1.0 + 1e-12) & (np.abs(den) > 1e-15)
        best = np.where(ok, t, np.inf).min(axis=1)
    if disks is not None and len(disks):
        fx = origin.x - disks[:, 0]
        fy = origin.y - disks[:, 1]
        b = np.multiply.outer(c, fx) + np.multiply.outer(s, fy)
        cc = fx * fx + fy * fy - disks[:, 2] ** 2
        disc = b * b - cc
        with np.errstate(invalid="ignore"):
            sq = np.sqrt(disc)
        t0 = -b - sq
        t1 = -b + sq
        # origin inside a disk reads as an immediate hit
        t = np.where(t0 >= 0, t0, np.where(t1 >= 0, t1, np.inf))
        t = np.where(cc <= 0, 0.0, np.where(disc >= 0, t, np.inf))
        best = np.minimum(best, t.min(axis=1))
    return best


def sense_lidar(world: WorldState, robot: RobotState, model: LidarModel = LidarModel()) -> LidarScan:
    rel = model.beam_angles()
    edges = _obstacle_edges(world.obstacles)
    disks = np.array([(p.position.x, p.position.y, p.radius) for p in world.pedestrians]).reshape(-1, 3)
    ranges = cast_rays(robot.position, rel + robot.heading, edges, disks, model.max_range)
    ranges = np.where(ranges <= model.max_range, ranges, NO_RETURN)
    return LidarScan(ranges, rel, model.max_range)


# --- RGB-D -----------------------------------------------------------------------------------

@dataclass(frozen=True)
class _Projection:
    ped: Pedestrian
    distance: float
    bearing: float
    half_angle: float


def _project(world: WorldState, cam: RgbdCameraModel, eye: Frame2):
    out = []
    for p in world.pedestrians:
        local = eye.to_local(p.position)
        d = local.norm()
        if d <= p.radius:
            continue
        out.append(_Projection(p, d, local.angle(), math.asin(p.radius / d)))
    return out


def _box_for(cam: RgbdCameraModel, pr: _Projection) -> Optional[tuple]:
    """Integer pixel extents (x0, y0, x1, y1) of a projected pedestrian, clipped to the image."""
    x0 = round(cam.column_of(pr.bearing + pr.half_angle))
    x1 = round(cam.column_of(pr.bearing - pr.half_angle))
    head = math.atan2(BODY_HEIGHT - cam.mount_height, pr.distance)
    feet = math.atan2(-cam.mount_height, pr.distance)
    y0 = round(cam.row_of(head))
    y1 = round(cam.row_of(feet))
    x0, x1 = max(0, x0), min(cam.width, x1)
    y0, y1 = max(0, y0), min(cam.height, y1)
    if x1 <= x0 or y1 <= y0:
        return None
    return x0, y0, x1, y1


def detectable_rgbd(world: WorldState, cam: RgbdCameraModel, pr: _Projection, eye: Frame2) -> bool:
    if abs(pr.bearing) > cam.fov / 2.0:
        return False
    if not cam.near < pr.distance < cam.range:
        return False
    vis = visible_fraction(eye.translation, pr.ped, world.pedestrians, world.obstacles)
    return vis > cam.min_visible + VISIBILITY_TOL


def _quantize(values, cam: RgbdCameraModel):
    q = cam.depth_quantum
    if q > 0:
        values = np.round(np.asarray(values) / q) * q
    return np.where((values > cam.near) & (values < cam.range), values, NO_RETURN)


def sense_rgbd(world: WorldState, cam: RgbdCameraModel,
               rng: Optional[np.random.Generator] = None, lazy: bool = False):
    """Boxes and an aligned depth image as seen by the robot's RGB-D camera.

    Pedestrian pixels carry the range to the pedestrian centre (plus Gaussian noise inside
    detected boxes); background pixels carry the first obstacle hit, or NO_RETURN. With
    ``lazy`` the image is None when nothing is detected.
    """
    eye = cam.eye(world.robot)
    painted = []
    boxes = []
    regions = []
    for pr in _project(world, cam, eye):
        if pr.distance >= cam.range or abs(pr.bearing) - pr.half_angle > cam.fov / 2.0:
            continue
        ext = _box_for(cam, pr)
        if ext is None:
            continue
        painted.append((ext, float(_quantize(pr.distance, cam))))
        if detectable_rgbd(world, cam, pr, eye):
            boxes.append(BoundingBox(Point2(ext[0], ext[1]), ext[2] - ext[0], ext[3] - ext[1], pr.ped.id))
            regions.append(ext)
    if lazy and not boxes:
        return boxes, None
    h, w = cam.height, cam.width
    bearings = cam.bearing_of(np.arange(w) + 0.5)
    bg = _quantize(cast_rays(eye.translation, bearings + eye.rotation,
                             _obstacle_edges(world.obstacles), max_range=cam.range), cam)
    img = np.empty((h, w))
    img[:] = bg[None, :]
    for (x0, y0, x1, y1), d in painted:
        if math.isfinite(d):
            region = img[y0:y1, x0:x1]
            np.minimum(region, d, out=region)
    if rng is not None and cam.noise_sigma_depth > 0.0:
        for box, (x0, y0, x1, y1) in sorted(zip(boxes, regions), key=lambda z: z[0].ped_id):
            region = img[y0:y1, x0:x1]
            finite = np.isfinite(region)
            noisy = region[finite] + rng.normal(0.0, cam.noise_sigma_depth, size=int(finite.sum()))
            region[finite] = _quantize(noisy, cam)
    boxes.sort(key=lambda b: b.ped_id)
    return boxes, DepthImage(img, cam.near, cam.range)


# --- CCTV ------------------------------------------------------------------------------------

def detectable_cctv(world: WorldState, cam: CctvCameraModel, ped: Pedestrian) -> bool:
    if not point_in_polygon(cam.footprint, ped.position):
        return False
    vis = visible_fraction(cam.eye, ped, world.pedestrians, world.obstacles,
                           eye_height=cam.eye_height)
    return vis > cam.min_visible + VISIBILITY_TOL


def render_cctv_box(cam: CctvCameraModel, ped: Pedestrian) -> Optional[BoundingBox]:
    """Angled-view box whose bottom edge is centred on the pedestrian's feet."""
    gnd = cam.gnd_to_map.to_local(ped.position)
    feet = cam.ground_to_angled(gnd)
    left = cam.ground_to_angled(Point2(gnd.x - ped.radius, gnd.y))
    right = cam.ground_to_angled(Point2(gnd.x + ped.radius, gnd.y))
    m = max(2.0, left.distance_to(right))
    n = m * BODY_HEIGHT / (2.0 * ped.radius)
    x0 = round(feet.x - m / 2.0)
    x1 = round(feet.x + m / 2.0)
    y1 = round(feet.y)
    y0 = round(feet.y - n)
    x0, x1 = max(0, x0), min(cam.width, x1)
    y0, y1 = max(0, y0), min(cam.height, y1)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoundingBox(Point2(x0, y0), x1 - x0, y1 - y0, ped.id)


def sense_cctv(world: WorldState, cam: CctvCameraModel) -> list:
    # a fixed camera sees the same thing while nobody moves
    key = tuple((p.id, p.position, p.radius) for p in world.pedestrians)
    memo = cam.__dict__.get("_memo")
    if memo is not None and memo[0] == key and memo[1] is world.obstacles:
        return list(memo[2])
    boxes = []
    for p in world.pedestrians:
        if detectable_cctv(world, cam, p):
            box = render_cctv_box(cam, p)
            if box is not None:
                boxes.append(box)
    boxes.sort(key=lambda b: b.ped_id)
    object.__setattr__(cam, "_memo", (key, world.obstacles, tuple(boxes)))
    return boxes


class IdAssigner:
    """Maps ground-truth IDs to track IDs for one camera.

    With ``reassign_on_reentry`` a pedestrian that drops out of view gets a fresh track ID
    when it is detected again; otherwise IDs pass through unchanged.
    """

    def __init__(self, reassign_on_reentry: bool = False, first_fresh_id: int = 10_000):
        self.reassign = reassign_on_reentry
        self._next = first_fresh_id
        self._live: dict[int, int] = {}
        self._seen: set[int] = set()

    def __call__(self, boxes: list) -> list:
        if not self.reassign:
            return boxes
        now = {b.ped_id for b in boxes}
        live = {}
        for pid in sorted(now):
            if pid in self._live:
                live[pid] = self._live[pid]
            elif pid in self._seen:
                live[pid] = self._next
                self._next += 1
            else:
                live[pid] = pid
        self._seen |= now
        self._live = live
        return [BoundingBox(b.top_left, b.width, b.height, live[b.ped_id]) for b in boxes]
