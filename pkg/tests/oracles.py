"""Independent reference computations used by the tests.

Each one is deliberately written a different way from the library code it checks:
SVD instead of a direct solve, brute force instead of a monotone chain, scalar loops
instead of vectorised casting.
"""
import math
from itertools import combinations

import numpy as np


def dlt_homography(src, dst):
    """Homography by SVD of the 8x9 DLT system, normalised to m[2,2] = 1."""
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, _, vt = np.linalg.svd(np.array(rows, dtype=float))
    h = vt[-1].reshape(3, 3)
    return h / h[2, 2]


def brute_hull(points):
    """Vertices of the convex hull as a set: pairs (a, b) with every other point on one side."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return set(pts)
    verts = set()
    for a, b in combinations(pts, 2):
        side = [(b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) for p in pts]
        if all(s >= -1e-12 for s in side) or all(s <= 1e-12 for s in side):
            # keep only the extreme points of the supporting line
            on = [p for p, s in zip(pts, side) if abs(s) <= 1e-12]
            on.sort()
            verts.update((on[0], on[-1]))
    return verts


def components(pairs):
    """Connected components by repeated BFS over an adjacency map."""
    adj: dict = {}
    for a, b in pairs:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, out = set(), []
    for start in sorted(adj):
        if start in seen:
            continue
        comp, frontier = set(), [start]
        while frontier:
            x = frontier.pop()
            if x in comp:
                continue
            comp.add(x)
            frontier.extend(adj[x] - comp)
        seen |= comp
        out.append(frozenset(comp))
    return out


def _ray_disk(ox, oy, c, s, cx, cy, r):
    fx, fy = ox - cx, oy - cy
    b = c * fx + s * fy
    q = fx * fx + fy * fy - r * r
    if q <= 0:
        return 0.0
    disc = b * b - q
    if disc < 0:
        return math.inf
    t = -b - math.sqrt(disc)
    return t if t >= 0 else math.inf


def _ray_segment(ox, oy, c, s, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    den = c * ey - s * ex
    if abs(den) < 1e-15:
        return math.inf
    wx, wy = ax - ox, ay - oy
    t = (wx * ey - wy * ex) / den
    u = (wx * s - wy * c) / den
    return t if t >= 0 and -1e-12 <= u <= 1 + 1e-12 else math.inf


def scalar_ray_cast(origin, angle, segments, disks):
    """First hit along one ray, one primitive at a time."""
    c, s = math.cos(angle), math.sin(angle)
    best = math.inf
    for ax, ay, bx, by in segments:
        best = min(best, _ray_segment(origin[0], origin[1], c, s, ax, ay, bx, by))
    for cx, cy, r in disks:
        best = min(best, _ray_disk(origin[0], origin[1], c, s, cx, cy, r))
    return best


def sampled_visibility(eye, target, blockers, n=10_000):
    """Share of ``n`` rays across the target's angular width not stopped by a nearer blocker disk."""
    (tx, ty), tr = target
    d = math.hypot(tx - eye[0], ty - eye[1])
    beta = math.atan2(ty - eye[1], tx - eye[0])
    half = math.asin(tr / d)
    ang = beta + (np.arange(n) + 0.5) / n * 2 * half - half
    free = np.ones(n, dtype=bool)
    for (bx, by), br in blockers:
        if math.hypot(bx - eye[0], by - eye[1]) >= d:
            continue
        for i in np.flatnonzero(free):
            if _ray_disk(eye[0], eye[1], math.cos(ang[i]), math.sin(ang[i]), bx, by, br) < math.inf:
                free[i] = False
    return free.mean()


def crossing_window(speed_a, speed_b, offset, threshold):
    """Seconds two walkers on parallel lines ``offset`` apart spend closer than ``threshold``."""
    if offset >= threshold:
        return 0.0
    return 2.0 * math.sqrt(threshold ** 2 - offset ** 2) / (speed_a + speed_b)


def grid_coverage(region, footprint, path, reach, cell=0.25, obstacles=(), step=0.02):
    """Share of grid cells outside the footprint within ``reach`` of points sampled densely on ``path``."""
    x0, y0, x1, y1 = region
    samples = []
    for (ax, ay), (bx, by) in zip(path[:-1], path[1:]):
        n = max(1, int(math.hypot(bx - ax, by - ay) / step))
        for k in range(n + 1):
            samples.append((ax + (bx - ax) * k / n, ay + (by - ay) * k / n))
    if len(path) == 1:
        samples = list(path)
    samples = np.array(samples)
    total = hit = 0
    for cx in np.arange(x0 + cell / 2, x1, cell):
        for cy in np.arange(y0 + cell / 2, y1, cell):
            if footprint is not None:
                fx0, fy0, fx1, fy1 = footprint
                if fx0 < cx < fx1 and fy0 < cy < fy1:
                    continue
            if any(ox0 <= cx <= ox1 and oy0 <= cy <= oy1 for ox0, oy0, ox1, oy1 in obstacles):
                continue
            total += 1
            # dense sampling can undershoot by up to half a step
            hit += bool(np.min(np.hypot(samples[:, 0] - cx, samples[:, 1] - cy)) <= reach + step)
    return hit / total if total else 1.0
