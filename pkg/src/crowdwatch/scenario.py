"""Scenario files: YAML with named sections, explicit units in key names, unknown keys rejected.

A scenario holds one lab layout, a list of trials (each may swap the pedestrians, add
obstacles or override robot settings) and the sensing configurations to run every trial
under: ``cctv`` (fixed camera only, robot parked), ``robot`` (RGB-D only) and ``hybrid``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .geometry import ConvexPolygon, Frame2, Point2
from .monitor import MonitorConfig
from .navigation import PlannerConfig
from .sensors import CctvCameraModel, LidarModel, RgbdCameraModel
from .simworld import Obstacle, Pedestrian, RobotState, ScriptLeg, WorldState

CONFIGURATIONS = ("cctv", "robot", "hybrid")
WALL_THICKNESS = 0.2


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, msg, line=None, column=None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.line, self.column = line, column


class ValidationError(ScenarioError):
    def __init__(self, constraint: str, detail: str):
        super().__init__(f"{constraint}: {detail}")
        self.constraint = constraint


# --- schema helpers --------------------------------------------------------------------------

def _section(d, where: str, required=(), optional=()):
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ValidationError("type", f"{where} must be a mapping")
    allowed = set(required) | set(optional)
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ValidationError("unknown_key", f"{where}: {', '.join(map(str, unknown))}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ValidationError("missing_key", f"{where}: {', '.join(missing)}")
    return d


def _num(d, key, where, default=None, positive=False, nonneg=False):
    v = d.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError("type", f"{where}.{key} must be a finite number")
    if positive and v <= 0:
        raise ValidationError("positive", f"{where}.{key} must be > 0")
    if nonneg and v < 0:
        raise ValidationError("non_negative", f"{where}.{key} must be >= 0")
    return float(v)


def _vec(v, n, where):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ValidationError("shape", f"{where} must be a list of {n} numbers")
    out = []
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ValidationError("type", f"{where} must hold finite numbers")
        out.append(float(x))
    return out


# --- parsed structure ------------------------------------------------------------------------

@dataclass(frozen=True)
class CctvSpec:
    corners_px: tuple
    rect_size_m: tuple
    scale_m_per_px: float
    gnd_to_map: tuple  # x, y, theta (rad)
    resolution_px: tuple = (1920, 1080)
    eye_m: tuple = (0.0, 0.0)
    eye_height_m: float = 3.0
    min_visible: float = 0.5

    def build(self) -> CctvCameraModel:
        x, y, th = self.gnd_to_map
        return CctvCameraModel.from_corners(self.corners_px, self.rect_size_m, self.scale_m_per_px,
                                            Frame2.from_xyt(x, y, th), resolution=self.resolution_px,
                                            eye=self.eye_m, eye_height=self.eye_height_m,
                                            min_visible=self.min_visible)

    def footprint_box(self) -> tuple:
        fp = self.build().footprint.as_array()
        return (float(fp[:, 0].min()), float(fp[:, 1].min()), float(fp[:, 0].max()), float(fp[:, 1].max()))


@dataclass(frozen=True)
class RobotSpec:
    pose: tuple = (0.0, 0.0, 0.0)
    v_max: float = 0.75
    w_max: float = 0.75
    radius: float = 0.2
    patrol: str = "none"  # or "lawnmower"

    def build(self) -> RobotState:
        x, y, th = self.pose
        return RobotState(Frame2.from_xyt(x, y, th), v_max=self.v_max, w_max=self.w_max, radius=self.radius)


@dataclass(frozen=True)
class Trial:
    label: str
    pedestrians: tuple
    obstacles: tuple = ()
    robot: Optional[RobotSpec] = None
    tracking: Optional[dict] = None  # ped id and scripted walk window for tracking-time metrics


@dataclass(frozen=True)
class Scenario:
    experiment: str
    seed: int
    dt: float
    duration: float
    bounds: tuple
    obstacles: tuple
    robot: RobotSpec
    rgbd: RgbdCameraModel
    lidar: LidarModel
    cctv: Optional[CctvSpec]
    monitor: MonitorConfig
    planner: PlannerConfig
    trials: tuple
    configurations: tuple = CONFIGURATIONS
    end_on_alert: bool = False
    region: Optional[tuple] = None
    lane_spacing: Optional[float] = None
    safety_margin: float = 0.05
    source: str = ""

    def robot_for(self, trial: Trial) -> RobotSpec:
        return trial.robot or self.robot

    def world(self, trial: Trial) -> WorldState:
        return WorldState(trial.pedestrians, self.robot_for(trial).build(),
                          self.obstacles + trial.obstacles, self.dt, 0, self.seed, self.bounds,
                          self.safety_margin)

    def with_overrides(self, seed=None, duration=None) -> Scenario:
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if duration is not None:
            if duration <= 0:
                raise ValidationError("positive", "duration must be > 0")
            out = replace(out, duration=float(duration))
        return out


# --- parsing ---------------------------------------------------------------------------------

def _obstacle(d, where) -> Obstacle:
    d = _section(d, where, optional=("box_m", "polygon_m"))
    if ("box_m" in d) == ("polygon_m" in d):
        raise ValidationError("obstacle_shape", f"{where} needs exactly one of box_m, polygon_m")
    if "box_m" in d:
        x0, y0, x1, y1 = _vec(d["box_m"], 4, f"{where}.box_m")
        if not (x1 > x0 and y1 > y0):
            raise ValidationError("obstacle_shape", f"{where}.box_m must have positive extent")
        return Obstacle(ConvexPolygon.rectangle(x0, y0, x1, y1))
    pts = d["polygon_m"]
    if not isinstance(pts, list) or len(pts) < 3:
        raise ValidationError("obstacle_shape", f"{where}.polygon_m needs >= 3 vertices")
    verts = [tuple(_vec(p, 2, f"{where}.polygon_m")) for p in pts]
    poly = ConvexPolygon(tuple(verts))
    if poly.area() <= 0:
        raise ValidationError("obstacle_shape", f"{where}.polygon_m must be counter-clockwise and non-degenerate")
    return Obstacle(poly)


def _walls(bounds) -> tuple:
    x0, y0, x1, y1 = bounds
    t = WALL_THICKNESS
    return tuple(Obstacle(ConvexPolygon.rectangle(*b)) for b in (
        (x0 - t, y0 - t, x1 + t, y0), (x0 - t, y1, x1 + t, y1 + t),
        (x0 - t, y0, x0, y1), (x1, y0, x1 + t, y1)))


def _pedestrians(lst, where) -> tuple:
    if not isinstance(lst, list):
        raise ValidationError("type", f"{where} must be a list")
    peds = []
    for i, d in enumerate(lst):
        w = f"{where}[{i}]"
        d = _section(d, w, required=("id", "start_m"), optional=("radius_m", "script", "household"))
        pid = d["id"]
        if isinstance(pid, bool) or not isinstance(pid, int):
            raise ValidationError("type", f"{w}.id must be an integer")
        legs = []
        for j, leg in enumerate(d.get("script") or []):
            lw = f"{w}.script[{j}]"
            leg = _section(leg, lw, optional=("to_m", "speed_mps", "wait_s"))
            target = Point2(*_vec(leg["to_m"], 2, f"{lw}.to_m")) if "to_m" in leg else None
            speed = _num(leg, "speed_mps", lw, 0.0, nonneg=True)
            if target is not None and speed <= 0:
                raise ValidationError("positive", f"{lw}.speed_mps must be > 0 for a walking leg")
            if speed > 2.0:
                raise ValidationError("max_speed", f"{lw}.speed_mps exceeds 2.0")
            legs.append(ScriptLeg(target, speed, _num(leg, "wait_s", lw, 0.0, nonneg=True)))
        radius = _num(d, "radius_m", w, 0.3, positive=True)
        if not 0.2 <= radius <= 0.5:
            raise ValidationError("radius_range", f"{w}.radius_m must lie in [0.2, 0.5]")
        peds.append(Pedestrian(pid, Point2(*_vec(d["start_m"], 2, f"{w}.start_m")), radius=radius,
                               script=tuple(legs), household_tag=d.get("household")))
    ids = [p.id for p in peds]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ValidationError("unique_ids", f"{where}: duplicate pedestrian id(s) {dup}")
    return tuple(peds)


def _robot(d, where, base: Optional[RobotSpec] = None) -> RobotSpec:
    d = _section(d, where, optional=("pose", "v_max_mps", "w_max_radps", "radius_m", "patrol"))
    base = base or RobotSpec()
    pose = base.pose
    if "pose" in d:
        x, y, deg = _vec(d["pose"], 3, f"{where}.pose")
        pose = (x, y, math.radians(deg))
    patrol = d.get("patrol", base.patrol)
    if patrol not in ("none", "lawnmower"):
        raise ValidationError("enum", f"{where}.patrol must be none or lawnmower")
    return RobotSpec(pose, _num(d, "v_max_mps", where, base.v_max, positive=True),
                     _num(d, "w_max_radps", where, base.w_max, positive=True),
                     _num(d, "radius_m", where, base.radius, positive=True), patrol)


def _cameras(d):
    d = _section(d, "cameras", optional=("rgbd", "cctv", "lidar"))
    r = _section(d.get("rgbd"), "cameras.rgbd",
                 optional=("fov_deg", "range_m", "near_m", "width_px", "height_px", "mount_height_m",
                           "noise_sigma_m", "min_visible"))
    base = RgbdCameraModel()
    rgbd = RgbdCameraModel(
        fov=math.radians(_num(r, "fov_deg", "cameras.rgbd", 70.0, positive=True)),
        range=_num(r, "range_m", "cameras.rgbd", base.range, positive=True),
        near=_num(r, "near_m", "cameras.rgbd", base.near, nonneg=True),
        width=int(_num(r, "width_px", "cameras.rgbd", base.width, positive=True)),
        height=int(_num(r, "height_px", "cameras.rgbd", base.height, positive=True)),
        mount_height=_num(r, "mount_height_m", "cameras.rgbd", base.mount_height, positive=True),
        noise_sigma_depth=_num(r, "noise_sigma_m", "cameras.rgbd", base.noise_sigma_depth, nonneg=True),
        min_visible=_num(r, "min_visible", "cameras.rgbd", base.min_visible, nonneg=True))
    lidar_d = _section(d.get("lidar"), "cameras.lidar", optional=("fov_deg", "beams", "max_range_m"))
    lidar = LidarModel(math.radians(_num(lidar_d, "fov_deg", "cameras.lidar", 240.0, positive=True)),
                       int(_num(lidar_d, "beams", "cameras.lidar", 241, positive=True)),
                       _num(lidar_d, "max_range_m", "cameras.lidar", 5.6, positive=True))
    cctv = None
    if d.get("cctv") is not None:
        c = _section(d["cctv"], "cameras.cctv",
                     required=("corners_px", "rect_size_m", "scale_m_per_px", "gnd_to_map"),
                     optional=("resolution_px", "eye_m", "eye_height_m", "min_visible"))
        corners = c["corners_px"]
        if not isinstance(corners, list) or len(corners) != 4:
            raise ValidationError("shape", "cameras.cctv.corners_px needs 4 points")
        gx, gy, gdeg = _vec(c["gnd_to_map"], 3, "cameras.cctv.gnd_to_map")
        cctv = CctvSpec(tuple(tuple(_vec(p, 2, "cameras.cctv.corners_px")) for p in corners),
                        tuple(_vec(c["rect_size_m"], 2, "cameras.cctv.rect_size_m")),
                        _num(c, "scale_m_per_px", "cameras.cctv", positive=True),
                        (gx, gy, math.radians(gdeg)),
                        tuple(int(v) for v in _vec(c.get("resolution_px", [1920, 1080]), 2, "cameras.cctv.resolution_px")),
                        tuple(_vec(c.get("eye_m", [0, 0]), 2, "cameras.cctv.eye_m")),
                        _num(c, "eye_height_m", "cameras.cctv", 3.0, positive=True),
                        _num(c, "min_visible", "cameras.cctv", 0.5, nonneg=True))
        try:
            cctv.build()
        except Exception as e:
            raise ValidationError("cctv_homography", str(e)) from e
    return rgbd, lidar, cctv


def _monitor(d) -> MonitorConfig:
    w = "monitor"
    d = _section(d, w, optional=("distance_threshold_m", "breach_duration_s", "compliance_duration_s",
                                 "lock_hysteresis", "lock_timeout_s", "standoff_m", "hold_timer_on_dropout"))
    b = MonitorConfig()
    try:
        return MonitorConfig(_num(d, "distance_threshold_m", w, b.distance_threshold),
                             _num(d, "breach_duration_s", w, b.breach_duration),
                             _num(d, "compliance_duration_s", w, b.compliance_duration),
                             _num(d, "lock_hysteresis", w, b.lock_hysteresis),
                             _num(d, "lock_timeout_s", w, b.lock_timeout),
                             _num(d, "standoff_m", w, b.standoff),
                             bool(d.get("hold_timer_on_dropout", b.hold_timer_on_dropout)))
    except ValueError as e:
        raise ValidationError("monitor", str(e)) from e


def _planner(d, standoff):
    w = "planner"
    d = _section(d, w, optional=("horizon_s", "trigger_distance_m", "stop_distance_m", "heading_gain",
                                 "pfz_margin_m", "lane_spacing_m", "region_m"))
    b = PlannerConfig()
    cfg = PlannerConfig(horizon=_num(d, "horizon_s", w, b.horizon, positive=True),
                        trigger_distance=_num(d, "trigger_distance_m", w, b.trigger_distance, positive=True),
                        stop_distance=_num(d, "stop_distance_m", w, b.stop_distance, positive=True),
                        heading_gain=_num(d, "heading_gain", w, b.heading_gain, positive=True),
                        pfz_margin=_num(d, "pfz_margin_m", w, b.pfz_margin, nonneg=True),
                        standoff=standoff)
    region = tuple(_vec(d["region_m"], 4, "planner.region_m")) if "region_m" in d else None
    return cfg, region, _num(d, "lane_spacing_m", w, None, positive=True)


TOP_KEYS = ("experiment", "seed", "dt_s", "duration_s", "end_on_alert", "world", "robot", "cameras",
            "pedestrians", "monitor", "planner", "configurations", "trials", "safety_margin_m")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        col = mark.column + 1 if mark is not None else None
        raise ParseError(f"{source}: {getattr(e, 'problem', None) or e}", line, col) from e
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: top level must be a mapping", 1, 1)
    d = _section(raw, "scenario", required=("world", "duration_s"), optional=TOP_KEYS)
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ValidationError("type", "seed must be an integer")
    dt = _num(d, "dt_s", "scenario", 0.1, positive=True)
    if dt > 0.5:
        raise ValidationError("dt_range", "dt_s must lie in (0, 0.5]")
    duration = _num(d, "duration_s", "scenario", positive=True)

    wd = _section(d["world"], "world", required=("bounds_m",), optional=("walls", "obstacles"))
    bounds = tuple(_vec(wd["bounds_m"], 4, "world.bounds_m"))
    if not (bounds[2] > bounds[0] and bounds[3] > bounds[1]):
        raise ValidationError("bounds", "world.bounds_m must have positive extent")
    obstacles = tuple(_obstacle(o, f"world.obstacles[{i}]") for i, o in enumerate(wd.get("obstacles") or []))
    if wd.get("walls", True):
        obstacles = _walls(bounds) + obstacles

    robot = _robot(d.get("robot"), "robot")
    rgbd, lidar, cctv = _cameras(d.get("cameras"))
    monitor = _monitor(d.get("monitor"))
    planner, region, spacing = _planner(d.get("planner"), monitor.standoff)

    configs = d.get("configurations", list(CONFIGURATIONS))
    if not isinstance(configs, list) or not configs or any(c not in CONFIGURATIONS for c in configs):
        raise ValidationError("enum", f"configurations must be a non-empty subset of {list(CONFIGURATIONS)}")
    if cctv is None and any(c in ("cctv", "hybrid") for c in configs):
        raise ValidationError("cctv_required", "cctv and hybrid configurations need cameras.cctv")
    if robot.patrol == "lawnmower" and region is None:
        raise ValidationError("region_required", "lawnmower patrol needs planner.region_m")

    base_peds = _pedestrians(d.get("pedestrians") or [], "pedestrians")
    trials = []
    raw_trials = d.get("trials")
    if raw_trials is None:
        trials.append(Trial("main", base_peds))
    else:
        if not isinstance(raw_trials, list) or not raw_trials:
            raise ValidationError("type", "trials must be a non-empty list")
        for i, t in enumerate(raw_trials):
            w = f"trials[{i}]"
            t = _section(t, w, required=("label",), optional=("pedestrians", "obstacles", "robot", "tracking"))
            peds = _pedestrians(t["pedestrians"], f"{w}.pedestrians") if "pedestrians" in t else base_peds
            obs = tuple(_obstacle(o, f"{w}.obstacles[{j}]") for j, o in enumerate(t.get("obstacles") or []))
            rb = _robot(t["robot"], f"{w}.robot", robot) if "robot" in t else None
            tracking = None
            if "tracking" in t:
                tr = _section(t["tracking"], f"{w}.tracking", required=("ped", "walk_start_s", "walk_end_s"))
                tracking = {"ped": int(tr["ped"]),
                            "walk_start_s": _num(tr, "walk_start_s", f"{w}.tracking", nonneg=True),
                            "walk_end_s": _num(tr, "walk_end_s", f"{w}.tracking", nonneg=True)}
                if tracking["ped"] not in {p.id for p in peds}:
                    raise ValidationError("unknown_id", f"{w}.tracking.ped {tracking['ped']} is not a pedestrian")
            trials.append(Trial(str(t["label"]), peds, obs, rb, tracking))
        labels = [t.label for t in trials]
        if len(labels) != len(set(labels)):
            raise ValidationError("unique_labels", "trial labels must be unique")

    margin = _num(d, "safety_margin_m", "scenario", 0.05, nonneg=True)
    return Scenario(str(d.get("experiment", "")), seed, dt, duration, bounds, obstacles, robot, rgbd, lidar,
                    cctv, monitor, planner, tuple(trials), tuple(configs), bool(d.get("end_on_alert", False)),
                    region, spacing, margin, source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), str(path))


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    return Path(__file__).parent / "scenarios" / (name if name.endswith(".scn") else name + ".scn")
