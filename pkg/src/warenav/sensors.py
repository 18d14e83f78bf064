"""Ray-cast depth, the forward-ROI warning detector and the two raster views."""

from __future__ import annotations

import math
import re
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import WorldState, entity_positions
from .geometry import Rect, rays_box_exit, rays_disc, rays_rect
from .world import HEADING_VECTORS, STEP_PX, SceneConfig

NONE, STATIC, ENTITY, BOUNDARY = 0, 1, 2, 3
HIT_KINDS = ("none", "static", "entity", "boundary")

DEFAULT_FOV = 90.0


@dataclass(frozen=True, eq=False)
class DepthProfile:
    fov_degrees: float
    angles: np.ndarray  # degrees, positive = to the agent's right
    distances: np.ndarray  # px from the agent centre; inf where nothing was hit
    kinds: np.ndarray  # NONE / STATIC / ENTITY / BOUNDARY
    hit_index: np.ndarray  # obstacle or entity index, -1 otherwise

    @property
    def rays(self) -> list[tuple[float, float | None, str]]:
        return [
            (float(a), None if k == NONE else float(d), HIT_KINDS[k])
            for a, d, k in zip(self.angles, self.distances, self.kinds)
        ]

    def __len__(self) -> int:
        return len(self.angles)


@dataclass(frozen=True)
class WarningConfig:
    threshold_m: float = 1.0
    roi_half_angle: float = 15.0
    roi_range_limit: float = 5 * STEP_PX

    def __post_init__(self):
        if self.threshold_m <= 0:
            raise ValueError("threshold_m must be positive")
        if self.roi_half_angle <= 0:
            raise ValueError("roi_half_angle must be positive")


def ray_angles(fov: float, n_rays: int) -> np.ndarray:
    if n_rays < 1 or not 0 < fov <= 180:
        raise ValueError("need n_rays >= 1 and 0 < fov <= 180")
    if n_rays == 1:
        return np.zeros(1)
    return np.linspace(-fov / 2, fov / 2, n_rays)


def ray_directions(theta: float, angles: np.ndarray) -> np.ndarray:
    # heading 0 faces -x and turning right increases theta, so a world angle phi
    # points along (-cos phi, -sin phi) in image coordinates
    phi = np.radians(theta + angles)
    dirs = np.stack([-np.cos(phi), -np.sin(phi)], axis=1)
    dirs[np.abs(dirs) < 1e-12] = 0.0
    return dirs


def cast_depth(
    state: WorldState,
    scene: SceneConfig,
    fov: float = DEFAULT_FOV,
    n_rays: int = 91,
    include_boundary: bool = True,
) -> DepthProfile:
    angles = ray_angles(fov, n_rays)
    dirs = ray_directions(state.pose.theta, angles)
    origin = (float(state.pose.x), float(state.pose.y))
    best = np.full(n_rays, np.inf)
    kinds = np.zeros(n_rays, dtype=np.int8)
    index = np.full(n_rays, -1)
    for i, o in enumerate(scene.obstacles):
        t = rays_rect(origin, dirs, o.footprint)
        closer = t < best
        best = np.where(closer, t, best)
        kinds[closer] = STATIC
        index[closer] = i
    for i, c in enumerate(entity_positions(scene, state.entity_phases)):
        t = rays_disc(origin, dirs, c, scene.entities[i].radius)
        closer = t < best
        best = np.where(closer, t, best)
        kinds[closer] = ENTITY
        index[closer] = i
    if include_boundary:
        t = rays_box_exit(origin, dirs, scene.map.width, scene.map.height)
        closer = t < best
        best = np.where(closer, t, best)
        kinds[closer] = BOUNDARY
        index[closer] = -1
    return DepthProfile(float(fov), angles, best, kinds, index)


def detect_warning(profile: DepthProfile, cfg: WarningConfig, scale: float) -> bool:
    """Minimum ROI depth (metres) below the threshold."""
    if len(profile) == 0:
        raise ValueError("empty depth profile")
    roi = (
        (np.abs(profile.angles) <= cfg.roi_half_angle)
        & (profile.kinds != NONE)
        & (profile.distances <= cfg.roi_range_limit)
    )
    if not roi.any():
        return False
    return bool(profile.distances[roi].min() * scale < cfg.threshold_m)


# -- palettes -----------------------------------------------------------------

FLOOR = (96, 92, 84)
CEILING = (44, 48, 60)
BOUNDARY_COLOR = (150, 150, 146)
TOPDOWN_FLOOR = (222, 220, 212)
AGENT_RED = (220, 20, 20)
TARGET_GREEN = (20, 190, 60)

OBSTACLE_PALETTES = {
    "wall": ((170, 170, 165), (140, 140, 150)),
    "shelf": ((200, 120, 40), (60, 110, 190), (170, 70, 50), (90, 140, 90)),
    "container": ((40, 120, 160), (160, 90, 40), (120, 60, 130)),
    "barrel": ((210, 180, 30), (50, 140, 120), (190, 80, 40)),
    "misc": ((120, 100, 80), (100, 120, 110), (130, 130, 90)),
}
ENTITY_COLORS = {"worker": (245, 205, 40), "forklift": (235, 135, 10), "robot": (70, 200, 220)}

# world heights in px for the ego projection; the camera sits 1 m (34 px) up
CAMERA_HEIGHT = 34.0
OBJECT_HEIGHTS = {"tall": 68.0, "low": 34.0}
ENTITY_HEIGHTS = {"worker": 58.0, "forklift": 68.0, "robot": 34.0}
BOUNDARY_HEIGHT = 68.0


def obstacle_color(kind: str, color_id: int) -> tuple[int, int, int]:
    pal = OBSTACLE_PALETTES[kind]
    return pal[color_id % len(pal)]


# -- egocentric view ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EgoImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8
    profile: DepthProfile = field(repr=False)

    @property
    def depth(self) -> np.ndarray:
        """Radial column depth buffer."""
        return self.profile.distances


def focal_length(width: int, fov: float) -> float:
    return (width / 2) / math.tan(math.radians(fov) / 2)


def slab_height(perp: float, object_height: float, focal: float) -> float:
    return focal * object_height / max(perp, 1e-6)


def render_ego(
    state: WorldState, scene: SceneConfig, width: int = 1024, height: int = 1024, fov: float = DEFAULT_FOV
) -> EgoImage:
    """Column ray-cast projection: one ray per image column, slab height ~ 1 / perpendicular depth."""
    profile = cast_depth(state, scene, fov=fov, n_rays=width)
    focal = focal_length(width, fov)
    perp = np.maximum(profile.distances * np.cos(np.radians(profile.angles)), 1e-6)
    obj_h = np.zeros(width)
    colors = np.zeros((width, 3), dtype=np.uint8)
    for col in range(width):
        k, i = profile.kinds[col], profile.hit_index[col]
        if k == STATIC:
            o = scene.obstacles[i]
            obj_h[col] = OBJECT_HEIGHTS[o.height_class]
            colors[col] = obstacle_color(o.kind, o.color_id)
        elif k == ENTITY:
            e = scene.entities[i]
            obj_h[col] = ENTITY_HEIGHTS[e.kind]
            colors[col] = ENTITY_COLORS[e.kind]
        elif k == BOUNDARY:
            obj_h[col] = BOUNDARY_HEIGHT
            colors[col] = BOUNDARY_COLOR
    horizon = height / 2
    bottom = horizon + focal * CAMERA_HEIGHT / perp
    top = bottom - focal * obj_h / perp
    rows = np.arange(height)[:, None] + 0.5
    slab = (rows >= top[None, :]) & (rows < bottom[None, :]) & (obj_h[None, :] > 0)
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[: int(horizon)] = CEILING
    img[int(horizon):] = FLOOR
    img[slab] = np.broadcast_to(colors[None, :, :], (height, width, 3))[slab]
    return EgoImage(width, height, img, profile)


# -- top-down view ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TopDownImage:
    width: int
    height: int
    pixels: np.ndarray


def _fill_rect(img: np.ndarray, r: Rect, color) -> None:
    h, w = img.shape[:2]
    x0, x1 = max(0, int(math.floor(r.x0))), min(w, int(math.ceil(r.x1)))
    y0, y1 = max(0, int(math.floor(r.y0))), min(h, int(math.ceil(r.y1)))
    if x0 < x1 and y0 < y1:
        img[y0:y1, x0:x1] = color


def _fill_disc(img: np.ndarray, c, radius: float, color) -> None:
    h, w = img.shape[:2]
    x0, x1 = max(0, int(c[0] - radius - 1)), min(w, int(c[0] + radius + 2))
    y0, y1 = max(0, int(c[1] - radius - 1)), min(h, int(c[1] + radius + 2))
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1] + 0.5
    mask = (xx - c[0]) ** 2 + (yy - c[1]) ** 2 <= radius * radius
    img[y0:y1, x0:x1][mask] = color


def agent_triangle(x: float, y: float, theta: int, size: float = 16.0) -> list[tuple[float, float]]:
    """Apex first; the apex points along the heading."""
    vx, vy = HEADING_VECTORS[theta]
    px, py = -vy, vx
    apex = (x + size * vx, y + size * vy)
    back = (x - 0.6 * size * vx, y - 0.6 * size * vy)
    half = 0.6 * size
    return [apex, (back[0] + half * px, back[1] + half * py), (back[0] - half * px, back[1] - half * py)]


def _fill_triangle(img: np.ndarray, pts, color) -> None:
    h, w = img.shape[:2]
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1 = max(0, int(min(xs)) - 1), min(w, int(max(xs)) + 2)
    y0, y1 = max(0, int(min(ys)) - 1), min(h, int(max(ys)) + 2)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1] + 0.5

    def edge(a, b):
        return (b[0] - a[0]) * (yy - a[1]) - (b[1] - a[1]) * (xx - a[0])

    e0, e1, e2 = edge(pts[0], pts[1]), edge(pts[1], pts[2]), edge(pts[2], pts[0])
    mask = ((e0 >= 0) & (e1 >= 0) & (e2 >= 0)) | ((e0 <= 0) & (e1 <= 0) & (e2 <= 0))
    img[y0:y1, x0:x1][mask] = color


def render_topdown(state: WorldState, scene: SceneConfig) -> TopDownImage:
    w, h = scene.map.width, scene.map.height
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = TOPDOWN_FLOOR
    for o in scene.obstacles:
        _fill_rect(img, o.footprint, obstacle_color(o.kind, o.color_id))
    for e, c in zip(scene.entities, entity_positions(scene, state.entity_phases)):
        _fill_disc(img, c, e.radius, ENTITY_COLORS[e.kind])
    _fill_disc(img, state.target, 7, TARGET_GREEN)
    p = state.pose
    _fill_triangle(img, agent_triangle(p.x, p.y, p.theta), AGENT_RED)
    return TopDownImage(w, h, img)


# -- raster files -------------------------------------------------------------


def encode_ppm(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def decode_ppm(data: bytes) -> np.ndarray:
    # header tokens are whitespace-separated; exactly one whitespace byte precedes the raster,
    # which may itself begin with whitespace-valued bytes
    m = re.match(rb"P6\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None or m.group(3) != b"255":
        raise ValueError("not an 8-bit P6 PPM")
    w, h = int(m.group(1)), int(m.group(2))
    return np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=m.end()).reshape(h, w, 3)


def write_ppm(path, pixels: np.ndarray) -> Path:
    path = Path(path)
    path.write_bytes(encode_ppm(pixels))
    return path


def encode_png(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape[:2]
    raw = np.ascontiguousarray(pixels, dtype=np.uint8).reshape(h, w * 3)
    scan = b"".join(b"\x00" + raw[r].tobytes() for r in range(h))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return struct.pack(">I", len(body)) + tag + body + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(scan, 6)) + chunk(b"IEND", b"")
