"""Regenerate the bundled scenario files.

Layouts are searched with the package's own sensor models so that, for example, exactly
ten of the outside sample points fall inside the parked robot's camera view. The counts
reported by a run are still produced by the full sensing and monitoring loop.

    python tools/make_scenarios.py
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from crowdwatch.geometry import Frame2, Point2
from crowdwatch.scenario import parse_scenario
from crowdwatch.sensors import RgbdCameraModel, sense_rgbd
from crowdwatch.simworld import Pedestrian, RobotState, WorldState, visible_fraction

OUT = Path(__file__).resolve().parents[1] / "src" / "crowdwatch" / "scenarios"

CCTV = {
    "corners_px": [[360, 1000], [1560, 1000], [1260, 300], [660, 300]],
    "rect_size_m": [6, 6],
    "scale_m_per_px": 0.01,
    "gnd_to_map": [0.5, 1.0, 0],
    "eye_m": [3.5, 0.1],
    "eye_height_m": 3.0,
}
INSIDE = [(x, y) for y in (2.0, 3.3, 4.6, 5.9) for x in (1.5, 2.5, 3.5, 4.5, 5.5)]
RGBD_SMALL = {"width_px": 320, "height_px": 240}


class Flow(list):
    pass


def _flow(dumper, data):
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=True)


yaml.SafeDumper.add_representer(Flow, _flow)


def flow(obj):
    """Short numeric lists and small mappings print on one line."""
    if isinstance(obj, dict):
        return {k: flow(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        items = [flow(v) for v in obj]
        if all(isinstance(v, (int, float, np.floating, np.integer)) for v in items):
            return Flow(float(v) if isinstance(v, (float, np.floating)) else int(v) for v in items)
        return items
    return obj


def write(name: str, doc: dict, header: str):
    text = "# " + "\n# ".join(header.strip().splitlines()) + "\n" + yaml.safe_dump(flow(doc), sort_keys=False, width=110)
    parse_scenario(text, name)  # must validate
    (OUT / name).write_text(text)
    print("wrote", name)


def pair_h(x, y):
    return [{"id": 1, "start_m": [x - 0.5, y]}, {"id": 2, "start_m": [x + 0.5, y]}]


def pair_v(x, y):
    return [{"id": 1, "start_m": [x, y - 0.5]}, {"id": 2, "start_m": [x, y + 0.5]}]


def pair_d(x, y):
    # diagonal: seen from a lane on either side, the nearer person is also the nearer one ahead
    return [{"id": 1, "start_m": [x - 0.35, y - 0.35]}, {"id": 2, "start_m": [x + 0.35, y + 0.35]}]


def peds_of(lst):
    return tuple(Pedestrian(d["id"], Point2(*d["start_m"])) for d in lst)


def detected(pose, peds, obstacles=(), cam=RgbdCameraModel(width=320, height=240)):
    world = WorldState(peds, RobotState(pose), obstacles)
    boxes, _ = sense_rgbd(world, cam, None, lazy=True)
    return {b.ped_id for b in boxes}


# --- Table I ---------------------------------------------------------------------------------

ROBOT_T1 = (7.4, 4.0, 0.0)  # parked next to the footprint, facing away from it
PAIR_GAP = 0.8


def pair_at(x, y, theta):
    """Two pedestrians PAIR_GAP apart, centred on (x, y), along direction ``theta``."""
    dx, dy = 0.5 * PAIR_GAP * math.cos(theta), 0.5 * PAIR_GAP * math.sin(theta)
    return [{"id": 1, "start_m": [round(x - dx, 4), round(y - dy, 4)]},
            {"id": 2, "start_m": [round(x + dx, 4), round(y + dy, 4)]}]


def classify(pose: Frame2, peds, fov=math.radians(70), rng=5.0):
    """True/False when every member is clearly in/out of view (3 deg, 0.3 m slack), else None."""
    flags = []
    for p in peds:
        loc = pose.to_local(p.position)
        b, d = abs(loc.angle()), loc.norm()
        if d < p.radius + 0.6:
            return None
        edge = math.asin(p.radius / d)
        clear_in = b + edge <= fov / 2 - math.radians(3) and d <= rng - 0.3
        clear_out = b >= fov / 2 + math.radians(3) or d >= rng + 0.3
        if not (clear_in or clear_out):
            return None
        flags.append(clear_in)
    return all(flags) if all(flags) or not any(flags) else None


def table1_outside(pose: Frame2, bounds=(7.0, 0.0, 14.0, 8.0)):
    """Ten points on a fan in the parked robot's view and ten spread over the rest of the room."""
    x0, y0, th0 = pose.x, pose.y, pose.rotation
    fan = []
    for r in (2.6, 3.9):
        for deg in (-15, -7.5, 0, 7.5, 15):
            a = th0 + math.radians(deg)
            fan.append((x0 + r * math.cos(a), y0 + r * math.sin(a), a + math.pi / 2))
    for x, y, th in fan:
        assert classify(pose, peds_of(pair_at(x, y, th))) is True
    # candidates clearly out of view, then farthest-point picks for an even spread
    cands = []
    for x in np.arange(bounds[0] + 1.0, bounds[2] - 0.7, 0.25):
        for y in np.arange(bounds[1] + 0.9, bounds[3] - 0.85, 0.25):
            if classify(pose, peds_of(pair_at(x, y, math.pi / 2))) is False:
                cands.append((float(x), float(y)))
    cands = np.array(cands)
    taken = np.array([(x, y) for x, y, _ in fan])
    others = []
    for _ in range(10):
        d = np.min(np.hypot(cands[:, None, 0] - taken[None, :, 0], cands[:, None, 1] - taken[None, :, 1]), axis=1)
        k = int(np.argmax(d))
        others.append((round(cands[k, 0], 2), round(cands[k, 1], 2), math.pi / 2))
        taken = np.vstack([taken, cands[k]])
    return [(round(x, 3), round(y, 3), th) for x, y, th in fan] + others


def occluder_for(pose: Frame2, target: Point2, other: Point2, depth=0.8, length=0.7, thickness=0.1):
    """Thin wall whose edge lies on the sight line to ``target``, hiding the half away from ``other``."""
    eye = pose.translation
    d = eye.distance_to(target)
    u = Point2((target.x - eye.x) / d, (target.y - eye.y) / d)
    n = Point2(-u.y, u.x)
    side = 1.0 if (other - target).x * n.x + (other - target).y * n.y < 0 else -1.0
    c = Point2(target.x - u.x * depth, target.y - u.y * depth)
    a = c
    b = Point2(c.x + side * n.x * length, c.y + side * n.y * length)
    a2 = Point2(a.x - u.x * thickness, a.y - u.y * thickness)
    b2 = Point2(b.x - u.x * thickness, b.y - u.y * thickness)
    pts = [a, b, b2, a2]
    # counter-clockwise order
    area = sum(p.x * q.y - q.x * p.y for p, q in zip(pts, pts[1:] + pts[:1]))
    if area < 0:
        pts.reverse()
    return [[p.x, p.y] for p in pts]


def table1():
    rx, ry, deg = ROBOT_T1
    pose = Frame2.from_xyt(rx, ry, math.radians(deg))
    outside = table1_outside(pose)
    hits = list(range(10))
    for x, y in INSIDE:
        assert classify(pose, peds_of(pair_h(x, y))) is False

    base = {
        "seed": 11,
        "dt_s": 0.1,
        "duration_s": 30,
        "end_on_alert": True,
        "world": {"bounds_m": [0, 0, 14, 8]},
        "robot": {"pose": [rx, ry, deg], "v_max_mps": 0.75, "w_max_radps": 0.75},
        "cameras": {"rgbd": RGBD_SMALL, "cctv": CCTV},
        "configurations": ["cctv", "robot", "hybrid"],
    }
    trials_in = [{"label": f"in{i + 1:02d}", "pedestrians": pair_h(x, y)} for i, (x, y) in enumerate(INSIDE)]
    trials_out = [{"label": f"out{i + 1:02d}", "pedestrians": pair_at(x, y, th)}
                  for i, (x, y, th) in enumerate(outside)]

    c1 = dict(base, experiment="table1_case1", trials=trials_in + trials_out)
    write("table1_case1.scn", c1, """
Static pairs at 40 sample points, 20 inside the CCTV footprint and 20 outside it.
The robot is parked facing away from the footprint; ten outside points fall in its view.""")

    # hide one member of three robot-visible pairs behind a wall covering exactly half of it
    occluded = [1, 5, 8]
    trials2 = []
    for i, t in enumerate(trials_out):
        t = dict(t)
        if i in occluded:
            a, b = t["pedestrians"]
            target, other = Point2(*a["start_m"]), Point2(*b["start_m"])
            poly = occluder_for(pose, target, other)
            peds = peds_of(t["pedestrians"])
            from crowdwatch.geometry import ConvexPolygon
            from crowdwatch.simworld import Obstacle
            ob = Obstacle(ConvexPolygon(tuple(map(tuple, poly))))
            frac = visible_fraction(pose.translation, peds[0], peds, [ob])
            print(f"  occluder for out{i + 1:02d}: visible fraction {frac:.12f}")
            t["obstacles"] = [{"polygon_m": poly}]
        trials2.append(t)
    c2 = dict(base, experiment="table1_case2", trials=trials_in + trials2)
    write("table1_case2.scn", c2, """
Same layout as case 1; for three of the robot-visible outside points a thin wall hides
exactly half of one pedestrian from the robot's camera.""")


# --- Table I case 3: separate rooms joined by a dog-leg corridor -----------------------------

def table1_case3():
    walls = [
        {"box_m": [7.0, 1.4, 7.2, 8.0]},   # partition with a door at its foot
        {"box_m": [8.6, 0.0, 8.8, 6.6]},   # baffle, corridor opens at the top
    ]
    # three lanes at y = 1.67, 4.0, 6.33; pairs stand diagonally between them
    outside = [(round(9.9 + 0.56 * i, 2), y) for y in (2.83, 5.17) for i in range(10)]
    region = [9.3, 0.5, 15.5, 7.5]
    doc = {
        "experiment": "table1_case3",
        "seed": 13,
        "dt_s": 0.1,
        "duration_s": 45,
        "end_on_alert": True,
        "world": {"bounds_m": [0, 0, 16, 8], "obstacles": walls},
        "robot": {"pose": [9.5, 1.67, 0], "patrol": "lawnmower"},
        "cameras": {"rgbd": RGBD_SMALL, "cctv": CCTV},
        "planner": {"region_m": region, "lane_spacing_m": 2.4},
        "configurations": ["cctv", "robot", "hybrid"],
        "trials": [{"label": f"in{i + 1:02d}", "pedestrians": pair_h(x, y)} for i, (x, y) in enumerate(INSIDE)]
        + [{"label": f"out{i + 1:02d}", "pedestrians": pair_d(x, y)} for i, (x, y) in enumerate(outside)],
    }
    write("table1_case3.scn", doc, """
The CCTV room (left) and the blind-spot room (right) are joined by a dog-leg corridor,
so no inside point can be seen from the patrol region. The robot patrols the right room
with lawnmower lanes.""")


# --- Table II: a pair crossing in front of the robot -----------------------------------------

def table2(pass_dist=0.7, lead=-0.8, gap=1.0, stand=6.0, path=5.0):
    trailing = lead - gap
    mid_y = (lead + trailing) / 2.0
    heading = math.degrees(math.atan2(mid_y, pass_dist))
    trials = []
    for w in (0.5, 0.75, 1.0):
        for s in (0.25, 0.5, 0.75, 1.0):
            walk = path / s
            peds = [
                {"id": 1, "start_m": [pass_dist, lead],
                 "script": [{"wait_s": stand}, {"to_m": [pass_dist, lead + path], "speed_mps": s}]},
                {"id": 2, "start_m": [pass_dist, trailing],
                 "script": [{"wait_s": stand}, {"to_m": [pass_dist, trailing + path], "speed_mps": s}]},
            ]
            trials.append({"label": f"w{w:.2f}_v{s:.2f}", "pedestrians": peds,
                           "robot": {"w_max_radps": w},
                           "tracking": {"ped": 1, "walk_start_s": stand, "walk_end_s": stand + walk}})
    doc = {
        "experiment": "table2",
        "seed": 21,
        "dt_s": 0.1,
        "duration_s": 30,
        "world": {"bounds_m": [-3, -4, 5, 6]},
        "robot": {"pose": [0.0, 0.0, round(heading, 3)], "v_max_mps": 0.75},
        "cameras": {"rgbd": {"width_px": 320, "height_px": 240}},
        "configurations": ["robot"],
        "trials": trials,
    }
    write("table2.scn", doc, f"""
A close pair stands {stand:g} s (long enough to confirm a breach), then walks {path:g} m across
the robot's view, passing {pass_dist:g} m in front of it. One trial per (turn rate, walking speed).""")


def empty():
    doc = {"experiment": "empty", "seed": 1, "duration_s": 10, "world": {"bounds_m": [0, 0, 10, 10]},
           "robot": {"pose": [5, 5, 0]}, "configurations": ["robot"]}
    write("empty.scn", doc, "No pedestrians: nothing is detected and the monitor stays in the patrol phase.")


def crossing():
    doc = {
        "experiment": "pfz_crossing",
        "seed": 5,
        "duration_s": 14,
        "world": {"bounds_m": [0, 0, 14, 8]},
        "robot": {"pose": [1.0, 4.0, 0], "patrol": "lawnmower"},
        "cameras": {"rgbd": RGBD_SMALL},
        "planner": {"region_m": [1.0, 3.0, 13.0, 5.0], "lane_spacing_m": 5.0},
        "configurations": ["robot"],
        "pedestrians": [
            {"id": 1, "start_m": [8.0, 4.5], "script": [{"to_m": [1.5, 4.5], "speed_mps": 1.0}]},
        ],
    }
    write("pfz_crossing.scn", doc, "A pedestrian walks toward the patrolling robot half a metre off its lane; the robot must swerve to keep clear.")


# --- pursuit around a sharp turn ------------------------------------------------------------

def fig8b(stand=6.0, speed=1.0):
    doc = {
        "experiment": "fig8b",
        "seed": 8,
        "dt_s": 0.1,
        "duration_s": 25,
        "world": {"bounds_m": [0, 0, 12, 8], "obstacles": [{"box_m": [6.0, 0.0, 6.2, 5.0]}]},
        "robot": {"pose": [4.9, 0.6, 90]},
        "cameras": {"rgbd": RGBD_SMALL},
        "configurations": ["robot"],
        "pedestrians": [
            {"id": 1, "start_m": [5.3, 2.5], "script": [
                {"wait_s": stand}, {"to_m": [5.3, 5.6], "speed_mps": speed},
                {"to_m": [6.9, 5.6], "speed_mps": speed}, {"to_m": [6.9, 1.0], "speed_mps": speed}]},
            {"id": 2, "start_m": [4.5, 2.5], "script": [
                {"wait_s": stand}, {"to_m": [4.5, 6.4], "speed_mps": speed},
                {"to_m": [7.7, 6.4], "speed_mps": speed}, {"to_m": [7.7, 1.0], "speed_mps": speed}]},
        ],
    }
    write("fig8b.scn", doc, """
RGB-D only. A close pair walks north past the end of a wall, then doubles back south behind
it; the robot's camera loses them at the turn.""")


def fig8c(stand=6.0, speed=0.5):
    # p2 walks the inner, shorter side of the turn and slows so both turn together
    inner = speed * 2.5 / 3.5
    doc = {
        "experiment": "fig8c",
        "seed": 9,
        "dt_s": 0.1,
        "duration_s": 34,
        "world": {"bounds_m": [0, 0, 12, 8]},
        "robot": {"pose": [3.0, 0.6, 90]},
        "cameras": {"rgbd": RGBD_SMALL, "cctv": CCTV},
        "configurations": ["hybrid"],
        "pedestrians": [
            {"id": 1, "start_m": [2.5, 2.0], "script": [
                {"wait_s": stand}, {"to_m": [2.5, 5.5], "speed_mps": speed},
                {"to_m": [11.0, 5.5], "speed_mps": speed}]},
            {"id": 2, "start_m": [3.5, 2.0], "script": [
                {"wait_s": stand}, {"to_m": [3.5, 4.5], "speed_mps": inner},
                {"to_m": [11.0, 4.5], "speed_mps": speed}]},
        ],
    }
    write("fig8c.scn", doc, """
CCTV guidance. The pair turns a corner inside the CCTV footprint and the robot follows the
trail of their midpoint; once they walk out of the footprint the robot's camera takes over.""")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    empty()
    crossing()
    table2()
    table1()
    table1_case3()
    fig8b()
    fig8c()
