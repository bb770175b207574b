import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdwatch.geometry import ConvexPolygon, Frame2, Point2
from crowdwatch.perception import box_depth_values, nearest_fraction_mean
from crowdwatch.scenario import bundled, load_scenario
from crowdwatch.sensors import (NO_RETURN, IdAssigner, LidarModel, RgbdCameraModel, sense_cctv, sense_lidar,
                                sense_rgbd)
from crowdwatch.simworld import Obstacle, Pedestrian, RobotState, WorldState

from oracles import scalar_ray_cast

CAM = RgbdCameraModel()
CCTV = load_scenario(bundled("table1_case1")).cctv.build()


def world_with(*peds, obstacles=(), pose=Frame2()):
    return WorldState(tuple(peds), RobotState(pose=pose), tuple(obstacles), bounds=(-20, -20, 20, 20))


def polar(r, deg):
    a = math.radians(deg)
    return Point2(r * math.cos(a), r * math.sin(a))


def test_dead_ahead_detection():
    boxes, img = sense_rgbd(world_with(Pedestrian(1, Point2(3, 0))), CAM, np.random.default_rng(0))
    assert [b.ped_id for b in boxes] == [1]
    assert boxes[0].centroid.x == pytest.approx(320, abs=1)
    d = nearest_fraction_mean(box_depth_values(boxes[0], img))
    # the nearest tenth of Gaussian noise sits below the mean, inside three sigma
    assert abs(d - 3.0) <= 3 * CAM.noise_sigma_depth


def test_outside_fov_not_detected():
    boxes, _ = sense_rgbd(world_with(Pedestrian(1, polar(3, 40))), CAM)
    assert boxes == []


def _half_occluded(eye, direction, d_target=4.0, d_blocker=3.0):
    """Target and a blocker covering exactly half of it, seen from ``eye`` along ``direction``."""
    a_b = math.asin(0.3 / d_blocker)
    ex, ey = eye
    t = Point2(ex + d_target * math.cos(direction), ey + d_target * math.sin(direction))
    b = Point2(ex + d_blocker * math.cos(direction + a_b), ey + d_blocker * math.sin(direction + a_b))
    return Pedestrian(1, t), Pedestrian(2, b)


def test_exactly_half_occluded_not_detected():
    target, blocker = _half_occluded((0, 0), 0.0)
    boxes, _ = sense_rgbd(world_with(target, blocker), CAM)
    assert [b.ped_id for b in boxes] == [2]


def test_cctv_footprint():
    c = CCTV.footprint.centroid()
    assert [b.ped_id for b in sense_cctv(world_with(Pedestrian(1, c)), CCTV)] == [1]
    x0, y0, x1, y1 = CCTV.footprint.bbox()
    assert sense_cctv(world_with(Pedestrian(1, Point2(x1 + 1.0, (y0 + y1) / 2))), CCTV) == []


def test_elevated_cctv_sees_both_of_an_occluding_pair():
    eye = (CCTV.eye.x, CCTV.eye.y)
    target, blocker = _half_occluded(eye, math.pi / 2)
    assert [b.ped_id for b in sense_cctv(world_with(target, blocker), CCTV)] == [1, 2]


def test_lidar_empty_world():
    scan = sense_lidar(world_with(), RobotState())
    assert np.all(scan.ranges == NO_RETURN)
    assert len(scan.ranges) == LidarModel().beams


def test_lidar_wall_ahead():
    wall = Obstacle(ConvexPolygon.rectangle(2.0, -10, 2.2, 10))
    scan = sense_lidar(world_with(obstacles=[wall]), RobotState())
    centre = len(scan.ranges) // 2
    assert scan.angles[centre] == 0.0
    assert scan.ranges[centre] == pytest.approx(2.0, abs=1e-12)


def test_lidar_matches_dense_scalar_oracle():
    rng = np.random.default_rng(11)
    obstacles = []
    for _ in range(5):
        x, y = rng.uniform(-4, 4, 2)
        w, h = rng.uniform(0.2, 1.5, 2)
        obstacles.append(Obstacle(ConvexPolygon.rectangle(x, y, x + w, y + h)))
    peds = [Pedestrian(i, Point2(*rng.uniform(-4, 4, 2)), radius=float(rng.uniform(0.2, 0.5))) for i in range(6)]
    robot = RobotState(pose=Frame2.from_xyt(0.1, -0.2, 0.4))
    # keep the robot outside everything so the scan is well defined
    robot_ok = all(p.position.distance_to(robot.position) > p.radius for p in peds)
    assert robot_ok
    world = WorldState(tuple(peds), robot, tuple(obstacles), bounds=(-10, -10, 10, 10))
    model = LidarModel()
    scan = sense_lidar(world, robot, model)
    segs = [(a.x, a.y, b.x, b.y) for o in obstacles for a, b in o.polygon.edges()]
    disks = [(p.position.x, p.position.y, p.radius) for p in peds]
    dense = np.linspace(-model.fov / 2, model.fov / 2, 10 * (model.beams - 1) + 1)
    oracle = np.array([scalar_ray_cast((robot.position.x, robot.position.y), a + robot.heading, segs, disks)
                       for a in dense[::10]])
    oracle = np.where(oracle <= model.max_range, oracle, np.inf)
    assert np.isfinite(scan.ranges).sum() > 20
    np.testing.assert_allclose(scan.ranges, oracle, atol=1e-6)


# --- properties ------------------------------------------------------------------------------

ped_positions = st.lists(st.tuples(st.floats(0.5, 6), st.floats(-40, 40)), min_size=1, max_size=6)


@given(ped_positions, st.floats(0.3, 1.2), st.floats(1.5, 5.0))
def test_detection_monotone_in_fov_and_range(pos, fov, rng_):
    peds = [Pedestrian(i, polar(r, a)) for i, (r, a) in enumerate(pos)]
    w = world_with(*peds)
    wide = RgbdCameraModel(fov=math.radians(70), range=5.0)
    narrow = replace(wide, fov=min(fov, wide.fov), range=min(rng_, wide.range))
    ids_wide = {b.ped_id for b in sense_rgbd(w, wide)[0]}
    ids_narrow = {b.ped_id for b in sense_rgbd(w, narrow)[0]}
    assert ids_narrow <= ids_wide


@given(st.floats(0.8, 4.8), st.floats(-30, 30))
def test_noiseless_depth_recovers_range(r, deg):
    half = math.degrees(math.asin(0.3 / r))
    if abs(deg) + half > 35:
        return
    cam = replace(CAM, noise_sigma_depth=0.0)
    boxes, img = sense_rgbd(world_with(Pedestrian(1, polar(r, deg))), cam)
    assert abs(nearest_fraction_mean(box_depth_values(boxes[0], img)) - r) <= 0.01


def test_ids_persist_while_visible():
    ped = Pedestrian(1, Point2(3, -1))
    ids = set()
    for k in range(20):
        w = world_with(replace(ped, position=Point2(3, -1 + 0.1 * k)))
        ids |= {b.ped_id for b in IdAssigner()(sense_rgbd(w, CAM)[0])}
    assert ids == {1}


def test_reentry_gets_fresh_id_when_asked():
    ids = IdAssigner(reassign_on_reentry=True)
    seen = world_with(Pedestrian(1, Point2(3, 0)))
    gone = world_with(Pedestrian(1, Point2(-3, 0)))
    first = ids(sense_rgbd(seen, CAM)[0])
    ids(sense_rgbd(gone, CAM)[0])
    again = ids(sense_rgbd(seen, CAM)[0])
    assert first[0].ped_id == 1 and again[0].ped_id != 1
