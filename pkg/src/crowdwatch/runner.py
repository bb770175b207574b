"""Closed-loop runs: sense, localize, monitor, plan, step; plus the event log and its summaries.

Every figure in a RunReport's summary is computed from the event log by ``summarize``,
so replaying a saved log reproduces the summary exactly.
"""
from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .geometry import Point2
from .monitor import Monitor, Observation, Phase, TrackHistory
from .navigation import (STOP, Breadcrumbs, LawnmowerFollower, PlannerInput, Roadmap, VelocityCommand,
                         SpacingTooWide, baseline_plan, blocked_interval, build_pfz, check_coverage,
                         lawnmower_waypoints, pursue, ray_hits)
from .perception import InsufficientDepth, Source, localize_cctv, localize_rgbd
from .scenario import Scenario, Trial, load_scenario
from .sensors import sense_cctv, sense_lidar, sense_rgbd
from .simworld import robot_clearance, step

ROUND = 4


def _r(x: float) -> float:
    return round(float(x), ROUND)


@dataclass
class RunReport:
    experiment: str
    seed: int
    summary: dict
    records: list
    trajectories: list = field(default_factory=list)  # (run, t, entity, x, y)

    def log_text(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def summary_text(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2) + "\n"


class _ErrorStats:
    def __init__(self):
        self.pos = {Source.RGBD: [], Source.CCTV: []}
        self.pair = {Source.RGBD: [], Source.CCTV: []}

    def add(self, source, estimates: dict, truth: dict):
        for pid, p in estimates.items():
            self.pos[source].append(p.distance_to(truth[pid]))
        ids = sorted(estimates)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                est = estimates[a].distance_to(estimates[b])
                self.pair[source].append(abs(est - truth[a].distance_to(truth[b])))

    def record(self) -> dict:
        out = {}
        for src in (Source.RGBD, Source.CCTV):
            for name, vals in (("position", self.pos[src]), ("pair_distance", self.pair[src])):
                key = f"{src.value.lower()}_{name}"
                out[key] = {"n": len(vals), "sum": _r(sum(vals)), "max": _r(max(vals)) if vals else None}
        return out


def _observe_rgbd(world, sc: Scenario, rng, t):
    boxes, depth = sense_rgbd(world, sc.rgbd, rng, lazy=True)
    loc = {}
    for b in boxes:
        try:
            loc[b.ped_id] = localize_rgbd(b, depth, sc.rgbd, t)
        except InsufficientDepth:
            pass
    boxes = [b for b in boxes if b.ped_id in loc]
    pose = world.robot.pose
    return Observation(Source.RGBD, boxes, loc, sc.rgbd.width, {k: pose.apply(v.position) for k, v in loc.items()})


def _observe_cctv(world, cam, t):
    boxes = sense_cctv(world, cam)
    loc = {b.ped_id: localize_cctv(b, cam, t) for b in boxes}
    return Observation(Source.CCTV, boxes, loc, cam.width,
                       {k: cam.gnd_to_map.apply(v.position) for k, v in loc.items()})


@functools.lru_cache(maxsize=16)
def _roadmap(obstacles, clearance):
    return Roadmap(obstacles, clearance)


@functools.lru_cache(maxsize=16)
def _lawnmower(region, footprint, spacing, sensor_range, obstacles):
    return lawnmower_waypoints(region, footprint, spacing, sensor_range, obstacles)


REPLAN_DISTANCE = 0.25
STALL_SECONDS = 3.0
STALL_DISTANCE = 0.05


class _Pilot:
    """Turns the monitor's state into a velocity command for one run."""

    def __init__(self, sc: Scenario, trial: Trial, world, moving: bool):
        self.sc = sc
        self.cfg = sc.planner
        self.moving = moving
        self.roadmap = _roadmap(world.obstacles, self.cfg.route_clearance)
        self.crumbs = Breadcrumbs(self.cfg.crumb_lookahead)
        self.follower = None
        if moving and sc.robot_for(trial).patrol == "lawnmower":
            fp = sc.cctv.footprint_box() if sc.cctv is not None else None
            plan = _lawnmower(sc.region, fp, sc.lane_spacing, sc.rgbd.range, world.obstacles)
            self.follower = LawnmowerFollower(plan, self.cfg.waypoint_reach)
        self.was_active = False
        self.stall_anchor = None
        self.stall_steps = 0
        self.path: list = []
        self.side = 0

    def _stalled(self, pos: Point2) -> bool:
        if self.stall_anchor is None or pos.distance_to(self.stall_anchor) > STALL_DISTANCE:
            self.stall_anchor, self.stall_steps = pos, 0
            return False
        self.stall_steps += 1
        if self.stall_steps * self.sc.dt >= STALL_SECONDS:
            self.stall_anchor, self.stall_steps = pos, 0
            return True
        return False

    def _local(self, robot, p: Point2) -> Point2:
        return robot.pose.to_local(p)

    def _routed(self, robot, goal_map: Point2) -> Optional[Point2]:
        wp = self._next_waypoint(robot.position, goal_map)
        return None if wp == goal_map else self._local(robot, wp)

    def _next_waypoint(self, pos: Point2, goal: Point2) -> Point2:
        # reuse the last route while the goal stays put; replanning every step is the slow part
        rm = self.roadmap
        path = self.path
        if path and path[-1].distance_to(goal) < REPLAN_DISTANCE:
            if rm.clear_from(pos, goal):
                self.path = [goal]
                return goal
            while len(path) > 1 and pos.distance_to(path[0]) < self.cfg.waypoint_reach:
                path.pop(0)
            if len(path) > 1 and rm.clear_from(pos, path[0]):
                return path[0]
        self.path = list(rm.route(pos, goal))
        return self.path[0]

    def command(self, world, monitor: Monitor, state, obs: dict, pfz, lidar) -> VelocityCommand:
        robot = world.robot
        if not self.moving:
            return STOP
        if state.active is not None:
            self.was_active = True
            self.stall_anchor = None
            if state.goal is None:
                return STOP
            steer = None
            if state.goal_source == Source.CCTV:
                seen = [obs[Source.CCTV].map_positions[m] for m in sorted(state.active.member_ids)
                        if m in obs[Source.CCTV].map_positions]
                if seen:
                    self.crumbs.add(Point2(sum(p.x for p in seen) / len(seen), sum(p.y for p in seen) / len(seen)))
                tgt = self.crumbs.target(robot.position)
                if tgt is not None:
                    steer = self._routed(robot, tgt) or self._local(robot, tgt)
            else:
                self.crumbs.clear()
                steer = self._routed(robot, robot.pose.apply(state.goal))
            return pursue(state.goal, state.goal_source, robot, pfz, lidar, self.sc.rgbd.fov, self.cfg, steer,
                          self.side)
        self.crumbs.clear()
        if self.was_active and self.follower is not None:
            self.follower.nearest_restart(robot.position)
        self.was_active = False
        suspect = self._suspect(monitor, obs)
        if suspect is not None:
            self.stall_anchor = None
            bearing = math.atan2(suspect.y, suspect.x)
            return VelocityCommand(0.0, float(np.clip(self.cfg.heading_gain * bearing, -robot.w_max, robot.w_max)),
                                   bearing)
        if self.follower is None:
            return STOP
        if self._stalled(robot.position):
            self.follower.skip()
        wp = self.follower.carrot(robot.position)
        steer = self._routed(robot, wp) or self._local(robot, wp)
        return baseline_plan(PlannerInput(steer, lidar, side=self.side), pfz, robot, self.cfg)

    @staticmethod
    def _suspect(monitor: Monitor, obs: dict) -> Optional[Point2]:
        # hold still and face a close pair the robot's camera is timing
        o = obs.get(Source.RGBD)
        if o is None:
            return None
        table = monitor.timers[Source.RGBD]
        for pair in sorted(table.timers):
            if table.timers[pair].below_since is None:
                continue
            a, b = pair
            if a in o.localized and b in o.localized:
                pa, pb = o.localized[a].position, o.localized[b].position
                return Point2((pa.x + pb.x) / 2.0, (pa.y + pb.y) / 2.0)
        return None


def run_trial(sc: Scenario, trial: Trial, config: str, index: int):
    """One trial under one sensing configuration. Returns (records, trajectory rows)."""
    world = sc.world(trial)
    use_rgbd = config in ("robot", "hybrid")
    use_cctv = config in ("cctv", "hybrid")
    moving = config != "cctv"
    cctv_cam = sc.cctv.build() if use_cctv else None
    monitor = Monitor(sc.monitor, cctv_cam)
    rng = np.random.default_rng([sc.seed, index])
    tracks = TrackHistory()
    pilot = _Pilot(sc, trial, world, moving)
    errors = _ErrorStats()
    tag = {"trial": trial.label, "config": config}
    records = [{"event": "RunStarted", "t": 0.0, "experiment": sc.experiment, "seed": sc.seed,
                "dt": sc.dt, "tracking": trial.tracking, **tag}]
    traj = []
    run_id = f"{trial.label}:{config}"
    min_gap = robot_clearance(world.robot.position, world.robot.radius, world.pedestrians, world.obstacles)
    pfz_violations = 0
    halted_steps = 0
    steps = int(round(sc.duration / sc.dt))
    done = False
    for _ in range(steps):
        t = world.time
        truth = {p.id: p.position for p in world.pedestrians}
        obs = {}
        if use_rgbd:
            obs[Source.RGBD] = _observe_rgbd(world, sc, rng, t)
        if use_cctv:
            obs[Source.CCTV] = _observe_cctv(world, cctv_cam, t)
        for src, o in obs.items():
            errors.add(src, o.map_positions, truth)
        state, events = monitor.update(t, world.robot.pose, list(obs.values()))
        for ev in events:
            records.append({**ev.record(), **tag})
            if ev.kind == "AlertIssued" or (not moving and ev.kind == "BreachConfirmed"):
                done = sc.end_on_alert
        pfz = build_pfz({}, world.robot, sc.planner.horizon, sc.planner.min_ped_speed)
        lidar = None
        if moving:
            lidar = sense_lidar(world, world.robot, sc.lidar)
            if Source.RGBD in obs:
                o = obs[Source.RGBD]
                vel = tracks.update(t, o.map_positions)
                th = world.robot.heading
                c, s = math.cos(th), math.sin(th)
                peds = {pid: (o.localized[pid].position, Point2(c * v.x + s * v.y, -s * v.x + c * v.y))
                        for pid, v in vel.items()}
                pfz = build_pfz(peds, world.robot, sc.planner.horizon, sc.planner.min_ped_speed)
        cmd = pilot.command(world, monitor, state, obs, pfz, lidar)
        pilot.side = cmd.side
        if cmd.avoiding and ray_hits(pfz.hull, cmd.heading, sc.planner.pfz_inflation(world.robot)):
            pfz_violations += 1
        world = step(world, cmd)
        halted_steps += int(world.halted)
        min_gap = min(min_gap, world.clearance)
        tw = round(world.time, 3)
        traj.append((run_id, tw, "robot", _r(world.robot.position.x), _r(world.robot.position.y)))
        for p in world.pedestrians:
            traj.append((run_id, tw, f"ped{p.id}", _r(p.position.x), _r(p.position.y)))
        if done:
            break
    t_end = round(world.time, 3)
    records.append({"event": "LocalizationSummary", "t": t_end, **errors.record(), **tag})
    records.append({"event": "RunFinished", "t": t_end, "steps": world.step_count, "min_clearance": _r(min_gap),
                    "halted_steps": halted_steps, "pfz_violations": pfz_violations,
                    "final_phase": monitor.state.phase.value, **tag})
    return records, traj


def run_scenario(path_or_scenario, seed: Optional[int] = None, duration: Optional[float] = None,
                 trials: Optional[Iterable[str]] = None, configurations: Optional[Iterable[str]] = None) -> RunReport:
    sc = path_or_scenario if isinstance(path_or_scenario, Scenario) else load_scenario(path_or_scenario)
    sc = sc.with_overrides(seed, duration)
    want_trials = set(trials) if trials is not None else None
    want_cfg = list(configurations) if configurations is not None else list(sc.configurations)
    records, traj = [], []
    for i, trial in enumerate(sc.trials):
        if want_trials is not None and trial.label not in want_trials:
            continue
        for config in sc.configurations:
            if config not in want_cfg:
                continue
            r, tr = run_trial(sc, trial, config, i)
            records.extend(r)
            traj.extend(tr)
    return RunReport(sc.experiment, sc.seed, summarize(records), records, traj)


def coverage_report(sc: Scenario, cell: float = 0.25) -> dict:
    """Lawnmower check for a scenario: share of grid cells outside the CCTV footprint within sensor range."""
    if sc.region is None:
        raise ValueError(f"{sc.source or 'scenario'} has no patrol region")
    fp = sc.cctv.footprint_box() if sc.cctv is not None else None
    obstacles = sc.world(sc.trials[0]).obstacles if sc.trials else sc.obstacles
    try:
        plan = lawnmower_waypoints(sc.region, fp, sc.lane_spacing, sc.rgbd.range, obstacles, cell)
    except SpacingTooWide as exc:
        return {"ok": False, "fraction": None, "uncovered": None, "lanes": 0, "detail": str(exc)}
    frac, missed = check_coverage(plan, obstacles, cell)
    lanes = len({p.y for p in plan.waypoints})
    return {"ok": len(missed) == 0, "fraction": round(frac, 6), "uncovered": int(len(missed)),
            "lanes": lanes, "lane_spacing": plan.lane_spacing, "waypoints": len(plan.waypoints)}


# --- summaries from the log ------------------------------------------------------------------

def _runs(records) -> dict:
    runs: dict = {}
    for r in records:
        runs.setdefault((r["trial"], r["config"]), []).append(r)
    return runs


def tracking_duration(run: list) -> Optional[float]:
    """Seconds the scripted walker's group stayed locked during its walk, or None if not set up."""
    head = run[0]
    tr = head.get("tracking")
    if not tr:
        return None
    ped, start, end = tr["ped"], tr["walk_start_s"], tr["walk_end_s"]
    locked = any(r["event"] == "LockChanged" for r in run)
    last = start
    if locked:
        last = run[-1]["t"]
        for r in run:
            if r["event"] == "LockLost" and ped in r["members"]:
                last = r["last_seen"]
                break
    return round(max(0.0, min(last, end) - start), 3)


def summarize(records) -> dict:
    runs = _runs(records)
    by_cfg: dict = {}
    tracking: dict = {}
    attend: dict = {}
    loc_acc: dict = {}
    safety = {"min_clearance": None, "pfz_violations": 0, "halted_steps": 0}
    for (trial, config), run in runs.items():
        c = by_cfg.setdefault(config, {"runs": 0, "breaches": 0, "breaches_by_source": {"RGBD": 0, "CCTV": 0}})
        c["runs"] += 1
        breaches = [r for r in run if r["event"] == "BreachConfirmed"]
        if breaches:
            c["breaches"] += 1
        for src in {r["source"] for r in breaches}:
            c["breaches_by_source"][src] += 1
        alerts = [r for r in run if r["event"] == "AlertIssued"]
        if config != "cctv":
            c["enforcements"] = c.get("enforcements", 0) + (1 if alerts else 0)
            if alerts and breaches:
                attend.setdefault(config, {})[trial] = round(alerts[0]["t"] - breaches[0]["t"], 3)
        td = tracking_duration(run)
        if td is not None:
            tracking.setdefault(trial, {})[config] = td
        for r in run:
            if r["event"] == "LocalizationSummary":
                for k, v in r.items():
                    if isinstance(v, dict) and "n" in v:
                        acc = loc_acc.setdefault(k, {"n": 0, "sum": 0.0, "max": None})
                        acc["n"] += v["n"]
                        acc["sum"] += v["sum"]
                        if v["max"] is not None:
                            acc["max"] = v["max"] if acc["max"] is None else max(acc["max"], v["max"])
            if r["event"] == "RunFinished":
                mc = r["min_clearance"]
                safety["min_clearance"] = mc if safety["min_clearance"] is None else min(safety["min_clearance"], mc)
                safety["pfz_violations"] += r["pfz_violations"]
                safety["halted_steps"] += r["halted_steps"]
    localization = {k: {"n": v["n"], "mean": round(v["sum"] / v["n"], ROUND) if v["n"] else None, "max": v["max"]}
                    for k, v in sorted(loc_acc.items())}
    return {"configurations": by_cfg, "tracking": tracking, "attend_time": attend,
            "localization": localization, "safety": safety}


# --- files -----------------------------------------------------------------------------------

def write_log(report: RunReport, path) -> None:
    Path(path).write_text(report.log_text())


def read_log(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def replay(path) -> dict:
    """Summary recomputed from a saved event log."""
    return summarize(read_log(path))


def emit_trajectories(report: RunReport, path) -> None:
    """CSV table ``t, entity, x, y``; entities are prefixed with the run when there are several."""
    runs = {row[0] for row in report.trajectories}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "entity", "x", "y"])
        for run, t, entity, x, y in report.trajectories:
            w.writerow([t, entity if len(runs) <= 1 else f"{run}:{entity}", x, y])
