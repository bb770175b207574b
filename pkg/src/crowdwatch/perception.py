"""Localize detected pedestrians and measure pairwise distances.

RGB-D path: bearing from the box centroid column plus the mean of the nearest tenth of
the in-box depth pixels. CCTV path: the feet point (midpoint of the box's bottom edge) is
rectified with the ground homography and scaled to metres.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from typing import Sequence

import numpy as np

from .geometry import Point2, apply_homography
from .sensors import BoundingBox, CctvCameraModel, DepthImage, RgbdCameraModel

MIN_DEPTH_PIXELS = 10
NEAREST_FRACTION = 0.10


class Source(str, Enum):
    RGBD = "RGBD"
    CCTV = "CCTV"


class Frame(str, Enum):
    ROBOT = "robot"
    GND = "gnd"
    MAP = "map"


class PerceptionError(RuntimeError):
    pass


class InsufficientDepth(PerceptionError):
    pass


class MixedFrames(PerceptionError):
    pass


@dataclass(frozen=True)
class LocalizedPedestrian:
    ped_id: int
    position: Point2
    frame: Frame
    source: Source
    timestamp: float = 0.0

    def __post_init__(self):
        allowed = {Source.RGBD: {Frame.ROBOT, Frame.MAP}, Source.CCTV: {Frame.GND, Frame.MAP}}
        if self.frame not in allowed[self.source]:
            raise ValueError(f"{self.source.value} localization cannot be in {self.frame.value} frame")


@dataclass(frozen=True)
class PairDistance:
    id_a: int
    id_b: int
    distance: float
    timestamp: float
    source: Source

    def __post_init__(self):
        if not self.id_a < self.id_b:
            raise ValueError("pair ids must be ordered id_a < id_b")
        if self.distance < 0:
            raise ValueError("negative distance")

    @property
    def pair(self) -> tuple:
        return (self.id_a, self.id_b)


def nearest_fraction_mean(values: np.ndarray, fraction: float = NEAREST_FRACTION) -> float:
    """Mean of the smallest ``ceil(fraction * n)`` values (at least one)."""
    n = values.size
    k = max(1, math.ceil(fraction * n))
    return float(np.partition(values, k - 1)[:k].mean())


def box_depth_values(box: BoundingBox, depth: DepthImage) -> np.ndarray:
    x0, y0 = int(box.top_left.x), int(box.top_left.y)
    x1, y1 = x0 + int(box.width), y0 + int(box.height)
    patch = depth.pixels[y0:y1, x0:x1]
    return patch[(patch > depth.near) & (patch < depth.far)]


def bearing_from_column(x_centroid: float, width: int, fov: float) -> float:
    return (width / 2.0 - x_centroid) / width * fov


def localize_rgbd(box: BoundingBox, depth: DepthImage, cam: RgbdCameraModel,
                  timestamp: float = 0.0) -> LocalizedPedestrian:
    vals = box_depth_values(box, depth)
    if vals.size < MIN_DEPTH_PIXELS:
        raise InsufficientDepth(f"pedestrian {box.ped_id}: {vals.size} valid depth pixels")
    d_avg = nearest_fraction_mean(vals)
    psi = bearing_from_column(box.centroid.x, cam.width, cam.fov)
    local = Point2(d_avg * math.cos(psi), d_avg * math.sin(psi))
    return LocalizedPedestrian(box.ped_id, cam.mount.apply(local), Frame.ROBOT, Source.RGBD, timestamp)


def feet_point(box: BoundingBox) -> Point2:
    bl, br = box.bottom_left, box.bottom_right
    return Point2((bl.x + br.x) / 2.0, (bl.y + br.y) / 2.0)


def localize_cctv(box: BoundingBox, cam: CctvCameraModel, timestamp: float = 0.0,
                  frame: Frame = Frame.GND) -> LocalizedPedestrian:
    feet_top = apply_homography(cam.homography, feet_point(box))
    dx = feet_top.x - cam.top_origin.x
    dy = feet_top.y - cam.top_origin.y
    # polar offset from corner 1; ground axes are aligned with the top-view axes
    theta = math.atan2(dy, dx)
    r_gnd = cam.scale * math.hypot(dx, dy)
    gnd = Point2(r_gnd * math.cos(theta), r_gnd * math.sin(theta))
    if frame == Frame.MAP:
        return LocalizedPedestrian(box.ped_id, cam.gnd_to_map.apply(gnd), Frame.MAP, Source.CCTV, timestamp)
    if frame != Frame.GND:
        raise ValueError(f"CCTV localization cannot produce {frame}")
    return LocalizedPedestrian(box.ped_id, gnd, Frame.GND, Source.CCTV, timestamp)


def euclidean(a: Point2, b: Point2) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2)


def pairwise_distances(peds: Sequence[LocalizedPedestrian]) -> list:
    if not peds:
        return []
    frames = {p.frame for p in peds}
    sources = {p.source for p in peds}
    if len(frames) > 1 or len(sources) > 1:
        raise MixedFrames(f"frames {sorted(f.value for f in frames)}, sources {sorted(s.value for s in sources)}")
    source = peds[0].source
    t = max(p.timestamp for p in peds)
    ordered = sorted(peds, key=lambda p: p.ped_id)
    out = []
    for a, b in combinations(ordered, 2):
        if a.ped_id == b.ped_id:
            raise ValueError(f"duplicate pedestrian id {a.ped_id}")
        out.append(PairDistance(a.ped_id, b.ped_id, euclidean(a.position, b.position), t, source))
    return out
