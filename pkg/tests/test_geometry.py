import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from warenav.geometry import (
    GRAZE_EPS,
    Rect,
    point_rect_distance,
    point_segment_distance,
    ray_disc,
    ray_rect,
    rays_disc,
    rays_rect,
    segment_rect_distance,
)

coord = st.floats(-200, 200, allow_nan=False)


@st.composite
def rects(draw):
    x0, y0 = draw(coord), draw(coord)
    return Rect(x0, y0, x0 + draw(st.floats(1, 100)), y0 + draw(st.floats(1, 100)))


@st.composite
def unit(draw):
    a = draw(st.floats(0, 2 * math.pi))
    return (math.cos(a), math.sin(a))


def test_exact_corner_touch_is_a_miss():
    r = Rect(10, 10, 20, 20)
    d = (math.sqrt(0.5), -math.sqrt(0.5))
    # the line x + y = 40 meets the square only at its corner (20, 20)
    assert ray_rect((0, 40), d, r) is None
    assert np.isinf(rays_rect((0, 40), np.array([d]), r)[0])


def test_clip_longer_than_eps_is_a_hit():
    r = Rect(10, 10, 20, 20)
    d = (math.sqrt(0.5), -math.sqrt(0.5))
    t = ray_rect((0, 40 - 4 * GRAZE_EPS), d, r)
    assert t is not None and t == pytest.approx(math.sqrt(800), abs=0.01)


def test_ray_along_face_hits():
    assert ray_rect((0, 10), (1.0, 0.0), Rect(5, 10, 8, 20)) == 5.0


def test_tangent_disc_is_a_miss():
    assert ray_disc((0, 5), (1.0, 0.0), (10, 0), 5) is None
    assert ray_disc((0, 4), (1.0, 0.0), (10, 0), 5) == pytest.approx(7.0)


@given(coord, coord, st.lists(unit(), min_size=1, max_size=8), rects())
def test_vectorized_rect_matches_scalar(ox, oy, dirs, r):
    got = rays_rect((ox, oy), np.array(dirs), r)
    for d, g in zip(dirs, got):
        want = ray_rect((ox, oy), d, r)
        assert (np.isinf(g) and want is None) or g == pytest.approx(want)


@given(coord, coord, st.lists(unit(), min_size=1, max_size=8), coord, coord, st.floats(1, 50))
def test_vectorized_disc_matches_scalar(ox, oy, dirs, cx, cy, rad):
    got = rays_disc((ox, oy), np.array(dirs), (cx, cy), rad)
    for d, g in zip(dirs, got):
        want = ray_disc((ox, oy), d, (cx, cy), rad)
        assert (np.isinf(g) and want is None) or g == pytest.approx(want)


@given(coord, coord, rects())
def test_ray_hit_lands_on_boundary(ox, oy, r):
    assume(not r.contains((ox, oy)))
    cx, cy = (r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2
    n = math.hypot(cx - ox, cy - oy)
    d = ((cx - ox) / n, (cy - oy) / n)
    t = ray_rect((ox, oy), d, r)
    assert t is not None
    assert point_rect_distance((ox + d[0] * t, oy + d[1] * t), r) == pytest.approx(0, abs=1e-6)


@given(coord, coord, coord, coord, coord, coord)
def test_segment_distance_bounded_by_endpoints(px, py, ax, ay, bx, by):
    d = point_segment_distance((px, py), (ax, ay), (bx, by))
    assert d <= min(math.dist((px, py), (ax, ay)), math.dist((px, py), (bx, by))) + 1e-9


@given(coord, coord, coord, coord, rects())
def test_segment_rect_distance_vs_sampling(ax, ay, bx, by, r):
    d = segment_rect_distance((ax, ay), (bx, by), r)
    samples = min(point_rect_distance((ax + t * (bx - ax), ay + t * (by - ay)), r) for t in np.linspace(0, 1, 201))
    assert d <= samples + 1e-9
