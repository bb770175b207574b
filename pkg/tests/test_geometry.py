import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from crowdwatch.geometry import (ConvexPolygon, DegenerateCorrespondence, EmptyInput, Frame2, Homography,
                                 Point2, PointAtInfinity, apply_homography, convex_hull, normalize_angle,
                                 point_in_polygon, solve_homography)

from oracles import brute_hull, dlt_homography

TRAPEZOID = [(0, 0), (10, 0), (8, 6), (2, 6)]
RECT = [(0, 0), (10, 0), (10, 6), (0, 6)]

coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-math.pi, math.pi, allow_nan=False)


def test_identity_from_unit_square():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert solve_homography(sq, sq).allclose(Homography.identity(), atol=1e-12)


def test_trapezoid_matches_svd_oracle():
    m = solve_homography(TRAPEZOID, RECT)
    np.testing.assert_allclose(m.m, dlt_homography(TRAPEZOID, RECT), atol=1e-9)
    for s, d in zip(TRAPEZOID, RECT):
        assert apply_homography(m, s).distance_to(Point2(*d)) < 1e-6


def test_bottom_edge_midpoint_is_fixed():
    m = solve_homography(TRAPEZOID, RECT)
    q = apply_homography(m, (5, 0))
    assert q.distance_to(Point2(5, 0)) < 1e-9


def test_collinear_source_rejected():
    with pytest.raises(DegenerateCorrespondence):
        solve_homography([(0, 0), (1, 0), (2, 0), (0, 1)], RECT)


def test_apply_identity_and_scaling():
    assert apply_homography(Homography.identity(), (3.2, 4.5)) == Point2(3.2, 4.5)
    two = Homography(np.diag([2.0, 2.0, 1.0]))
    assert apply_homography(two, (1, 2)) == Point2(2, 4)


def test_point_at_infinity():
    m = Homography([[1, 0, 0], [0, 1, 0], [1, 0, 1]])
    with pytest.raises(PointAtInfinity):
        apply_homography(m, (-1, 0))


def test_hull_degenerate_cases():
    assert convex_hull([(0, 0)]).vertices == (Point2(0, 0),)
    assert len(convex_hull([(0, 0), (1, 1), (2, 2)])) == 2
    with pytest.raises(EmptyInput):
        convex_hull([])


def test_hull_drops_interior_point():
    h = convex_hull([(0, 0), (1, 0), (0, 1), (0.25, 0.25)])
    assert set(h.vertices) == {Point2(0, 0), Point2(1, 0), Point2(0, 1)}
    assert h.area() > 0  # counter-clockwise


def test_hull_random_disk_against_brute_force():
    rng = np.random.default_rng(7)
    r = np.sqrt(rng.uniform(0, 1, 100))
    a = rng.uniform(0, 2 * np.pi, 100)
    pts = [(float(x), float(y)) for x, y in zip(r * np.cos(a), r * np.sin(a))]
    h = convex_hull(pts)
    assert {(v.x, v.y) for v in h.vertices} == brute_hull(pts)


def test_point_in_polygon_examples():
    tri = convex_hull([(0, 0), (3, 0), (0, 3)])
    assert point_in_polygon(tri, tri.centroid())
    assert point_in_polygon(tri, (3, 0))
    assert not point_in_polygon(tri, (-1, 1))


@given(st.lists(st.tuples(coord, coord), min_size=1, max_size=30))
def test_hull_contains_inputs(pts):
    h = convex_hull(pts)
    assert all(point_in_polygon(h, p) for p in pts)


@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=3, max_size=25))
def test_hull_vertices_match_oracle(pts):
    pts = [(float(x), float(y)) for x, y in pts]
    assert {(v.x, v.y) for v in convex_hull(pts).vertices} == brute_hull(pts)


def _quad(draw_pts):
    pts = [Point2(x, y) for x, y in draw_pts]
    for i in range(4):
        for j in range(i + 1, 4):
            for k in range(j + 1, 4):
                a, b, c = pts[i], pts[j], pts[k]
                if abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)) < 1.0:
                    return None
    return pts


# a camera-like homography: a convex quadrilateral mapped onto a rectangle
quads = st.tuples(*[st.tuples(st.floats(0, 40), st.floats(0, 40))] * 4)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(0.5, 3), st.floats(-0.02, 0.02), st.floats(-0.02, 0.02))
def test_homography_round_trip(x, y, tx, ty, k, g, h):
    m = Homography([[k, 0.1, tx], [-0.2, k, ty], [g, h, 1.0]])
    w = g * x + h * y + 1.0
    assume(abs(w) > 0.1)
    p = Point2(x, y)
    back = apply_homography(m.inverse(), apply_homography(m, p))
    assert back.distance_to(p) < 1e-6


def test_origin_sent_to_infinity_is_degenerate():
    with pytest.raises(DegenerateCorrespondence):
        solve_homography([(0, 1), (0, 2), (1, 0), (2, 0)], RECT)


@given(quads)
def test_resolving_from_mapped_corners_reproduces_matrix(corners):
    pts = _quad(corners)
    assume(pts is not None)
    try:
        m = solve_homography(pts, RECT)
    except DegenerateCorrespondence:
        assume(False)
    mapped = [apply_homography(m, p) for p in pts]
    again = solve_homography(pts, mapped)
    assert again.allclose(m, atol=1e-6)


@given(angle, coord, coord, angle, coord, coord, angle, coord, coord)
def test_frame_composition_associative(a1, x1, y1, a2, x2, y2, a3, x3, y3):
    f, g, h = Frame2(a1, Point2(x1, y1)), Frame2(a2, Point2(x2, y2)), Frame2(a3, Point2(x3, y3))
    lhs, rhs = f.compose(g).compose(h), f.compose(g.compose(h))
    assert abs(normalize_angle(lhs.rotation - rhs.rotation)) < 1e-9
    assert lhs.translation.distance_to(rhs.translation) < 1e-9


@given(angle, coord, coord)
def test_frame_inverse_is_identity(a, x, y):
    f = Frame2(a, Point2(x, y))
    e = f.compose(f.inverse())
    assert abs(e.rotation) < 1e-12
    assert e.translation.norm() < 1e-12


def test_frame_rotation_normalised():
    assert Frame2(3 * math.pi).rotation == pytest.approx(math.pi)
    assert -math.pi < Frame2(-math.pi).rotation <= math.pi


def test_point_must_be_finite():
    with pytest.raises(ValueError):
        Point2(math.nan, 0.0)


def test_rectangle_polygon():
    r = ConvexPolygon.rectangle(0, 0, 2, 1)
    assert r.area() == pytest.approx(2.0)
    assert r.bbox() == (0, 0, 2, 1)
