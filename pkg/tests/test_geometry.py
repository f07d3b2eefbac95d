import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from synthcity import geometry as geo

from conftest import rect


def star_polygon(radii, jitter):
    n = len(radii)
    ang = np.sort((np.arange(n) + np.asarray(jitter) * 0.8) * 2 * math.pi / n)
    return np.column_stack([np.asarray(radii) * np.cos(ang), np.asarray(radii) * np.sin(ang)])


def test_signed_area_orientation():
    sq = rect(0, 0, 4, 3)
    assert geo.signed_area(sq) == pytest.approx(12.0)
    assert geo.signed_area(sq[::-1]) == pytest.approx(-12.0)
    assert geo.signed_area(geo.ensure_ccw(sq[::-1])) > 0


def test_segments_intersect_cases():
    assert geo.segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert not geo.segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))
    # touching at an endpoint counts as intersecting
    assert geo.segments_intersect((0, 0), (1, 0), (1, 0), (1, 1))


def test_ear_clip_square():
    tris = geo.ear_clip(rect(0, 0, 10, 10))
    assert tris.shape == (2, 3, 2)
    assert sum(geo.signed_area(t) for t in tris) == pytest.approx(100.0)


@given(st.lists(st.floats(1.0, 10.0), min_size=3, max_size=24).flatmap(
    lambda r: st.tuples(st.just(r), st.lists(st.floats(0, 1), min_size=len(r), max_size=len(r)))))
def test_ear_clip_conserves_area(args):
    radii, jitter = args
    poly = geo.dedupe(star_polygon(radii, jitter))
    if len(poly) < 3 or geo.polygon_area(poly) < 1e-6 or not geo.is_simple(poly):
        return
    poly = geo.ensure_ccw(poly)
    tris = geo.ear_clip(poly)
    assert len(tris) == len(poly) - 2 or len(geo.remove_collinear(poly)) < len(poly)
    areas = [geo.signed_area(t) for t in tris]
    assert min(areas) >= -1e-9
    assert sum(areas) == pytest.approx(geo.polygon_area(poly), rel=1e-9, abs=1e-9)


def test_offset_square_inset():
    out = geo.offset_polygon(rect(0, 0, 10, 10), 1.0)
    assert geo.polygon_area(out) == pytest.approx(64.0)
    assert geo.offset_polygon(rect(0, 0, 10, 10), 6.0) is None


def test_offset_per_edge_distances():
    out = geo.offset_polygon(rect(0, 0, 10, 10), [1.0, 2.0, 1.0, 2.0])
    assert geo.polygon_area(out) == pytest.approx(8.0 * 6.0)


def test_oriented_bbox_rotated_rectangle():
    a = math.radians(30)
    R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    poly = rect(0, 0, 20, 5) @ R.T + [3, 4]
    origin, axes, size = geo.oriented_bbox(poly)
    assert size[0] == pytest.approx(20.0)
    assert size[1] == pytest.approx(5.0)
    assert abs(abs(axes[0] @ [math.cos(a), math.sin(a)]) - 1.0) < 1e-9
    assert axes[0] @ axes[1] == pytest.approx(0.0, abs=1e-12)


def test_points_in_polygon_matches_scalar():
    poly = star_polygon([5, 2, 5, 2, 5, 2], [0.5] * 6)
    pts = np.random.default_rng(0).uniform(-6, 6, (200, 2))
    vec = geo.points_in_polygon(pts, poly)
    assert list(vec) == [geo.point_in_polygon(p, poly) for p in pts]
