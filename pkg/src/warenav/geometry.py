"""Planar primitives: axis-aligned rectangles, discs, segments and rays.

Image convention throughout: +x to the right, +y downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Point = tuple[float, float]

# a ray must pass through at least this much of a shape to count as hitting it;
# exact corner touches and float-noise grazes are misses, matching the strict
# (touching is not blocking) collision rule
GRAZE_EPS = 1e-3


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    def inflate(self, r: float) -> "Rect":
        return Rect(self.x0 - r, self.y0 - r, self.x1 + r, self.y1 + r)

    def contains(self, p: Point) -> bool:
        return self.x0 <= p[0] <= self.x1 and self.y0 <= p[1] <= self.y1

    def contains_strict(self, p: Point) -> bool:
        return self.x0 < p[0] < self.x1 and self.y0 < p[1] < self.y1

    def overlaps(self, other: "Rect") -> bool:
        """Positive-area overlap."""
        return (
            self.x0 < other.x1
            and other.x0 < self.x1
            and self.y0 < other.y1
            and other.y0 < self.y1
        )

    def corners(self) -> tuple[Point, Point, Point, Point]:
        return ((self.x0, self.y0), (self.x1, self.y0), (self.x1, self.y1), (self.x0, self.y1))


def point_rect_distance(p: Point, rect: Rect) -> float:
    dx = max(rect.x0 - p[0], 0.0, p[0] - rect.x1)
    dy = max(rect.y0 - p[1], 0.0, p[1] - rect.y1)
    return math.hypot(dx, dy)


def point_segment_distance(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    vx, vy = b[0] - ax, b[1] - ay
    seg2 = vx * vx + vy * vy
    if seg2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * vx + (p[1] - ay) * vy) / seg2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * vx), p[1] - (ay + t * vy))


def segment_intersects_rect(a: Point, b: Point, rect: Rect) -> bool:
    """Liang-Barsky clip of segment ab against the closed rectangle."""
    t0, t1 = 0.0, 1.0
    dx, dy = b[0] - a[0], b[1] - a[1]
    for p, q in (
        (-dx, a[0] - rect.x0),
        (dx, rect.x1 - a[0]),
        (-dy, a[1] - rect.y0),
        (dy, rect.y1 - a[1]),
    ):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return False
            t0 = max(t0, t)
        else:
            if t < t0:
                return False
            t1 = min(t1, t)
    return t0 <= t1


def segment_rect_distance(a: Point, b: Point, rect: Rect) -> float:
    """Minimum distance between segment ab and a closed rectangle (0 if they meet)."""
    if segment_intersects_rect(a, b, rect):
        return 0.0
    # disjoint convex sets: the minimum is attained at a vertex of one of them
    best = min(point_rect_distance(a, rect), point_rect_distance(b, rect))
    for c in rect.corners():
        best = min(best, point_segment_distance(c, a, b))
    return best


def ray_rect(origin: Point, direction: Point, rect: Rect) -> float | None:
    """Distance along a unit ray to a closed rectangle; 0 if the origin is inside."""
    tmin, tmax = -math.inf, math.inf
    for o, d, lo, hi in (
        (origin[0], direction[0], rect.x0, rect.x1),
        (origin[1], direction[1], rect.y0, rect.y1),
    ):
        if d == 0.0:
            if o < lo or o > hi:
                return None
            continue
        ta, tb = (lo - o) / d, (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        tmin, tmax = max(tmin, ta), min(tmax, tb)
    if tmin <= 0.0 <= tmax:
        return 0.0
    if tmin < 0.0 or tmax - tmin < GRAZE_EPS:
        return None
    return tmin


def ray_disc(origin: Point, direction: Point, center: Point, radius: float) -> float | None:
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    b = ox * direction[0] + oy * direction[1]
    c = ox * ox + oy * oy - radius * radius
    if c <= 0.0:
        return 0.0
    disc = b * b - c
    if disc < 0.0 or 2.0 * math.sqrt(disc) < GRAZE_EPS:
        return None
    t = -b - math.sqrt(disc)
    return t if t >= 0.0 else None


# -- vectorized over many rays ------------------------------------------------


def rays_rect(origin: Point, dirs: np.ndarray, rect: Rect) -> np.ndarray:
    """Vectorized `ray_rect`: returns distances with +inf for misses."""
    ox, oy = origin
    t_near = np.full(len(dirs), -np.inf)
    t_far = np.full(len(dirs), np.inf)
    miss = np.zeros(len(dirs), dtype=bool)
    for o, d, lo, hi in ((ox, dirs[:, 0], rect.x0, rect.x1), (oy, dirs[:, 1], rect.y0, rect.y1)):
        zero = d == 0.0
        safe = np.where(zero, 1.0, d)
        with np.errstate(over="ignore"):
            ta = (lo - o) / safe
            tb = (hi - o) / safe
        lo_t = np.where(zero, -np.inf, np.minimum(ta, tb))
        hi_t = np.where(zero, np.inf, np.maximum(ta, tb))
        if o < lo or o > hi:
            miss |= zero
        t_near = np.maximum(t_near, lo_t)
        t_far = np.minimum(t_far, hi_t)
    inside = ~miss & (t_near <= 0.0) & (t_far >= 0.0)
    ahead = ~miss & (t_near > 0.0) & (t_far - t_near >= GRAZE_EPS)
    return np.where(inside, 0.0, np.where(ahead, t_near, np.inf))


def rays_disc(origin: Point, dirs: np.ndarray, center: Point, radius: float) -> np.ndarray:
    ox, oy = origin[0] - center[0], origin[1] - center[1]
    c = ox * ox + oy * oy - radius * radius
    if c <= 0.0:
        return np.zeros(len(dirs))
    b = dirs[:, 0] * ox + dirs[:, 1] * oy
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t = -b - root
    return np.where((disc >= 0.0) & (2.0 * root >= GRAZE_EPS) & (t >= 0.0), t, np.inf)


def rays_box_exit(origin: Point, dirs: np.ndarray, width: float, height: float) -> np.ndarray:
    """Distance at which rays starting inside [0,w]x[0,h] leave the box."""
    out = np.full(len(dirs), np.inf)
    for o, d, size in ((origin[0], dirs[:, 0], width), (origin[1], dirs[:, 1], height)):
        with np.errstate(divide="ignore"):
            t = np.where(d > 0, (size - o) / np.where(d > 0, d, 1.0), np.inf)
            t = np.where(d < 0, -o / np.where(d < 0, d, -1.0), t)
        out = np.minimum(out, t)
    return np.maximum(out, 0.0)
