"""Scene model, the scene-config document, validation, generation and occupancy grids."""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable

import numpy as np

from .geometry import Point, Rect, point_rect_distance, point_segment_distance, segment_rect_distance

STEP_PX = 34
SUCCESS_DELTA = 20.0
DEFAULT_AGENT_RADIUS = 10
HEADINGS = (0, 90, 180, 270)
# heading -> unit step in image coordinates (+y is South)
HEADING_VECTORS = {0: (-1, 0), 90: (0, -1), 180: (1, 0), 270: (0, 1)}

OBSTACLE_KINDS = ("wall", "shelf", "container", "barrel", "misc")
HEIGHT_CLASSES = ("low", "tall")
ENTITY_KINDS = ("worker", "forklift", "robot")
DIFFICULTIES = ("easy", "medium", "hard")


class SceneError(ValueError):
    """Raised when a scene document cannot be parsed or holds out-of-range values."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None, column: int | None = None):
        self.key = key
        self.line = line
        self.column = column
        where = f"line {line} column {column}: " if line is not None else ""
        super().__init__(where + message)


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MapSpec:
    width: int = 1024
    height: int = 512
    meters_per_pixel: float = 1 / 34
    agent_radius: int = DEFAULT_AGENT_RADIUS

    @property
    def bounds(self) -> Rect:
        return Rect(0, 0, self.width, self.height)


@dataclass(frozen=True)
class Obstacle:
    id: str
    x: int
    y: int
    w: int
    h: int
    kind: str = "shelf"
    height_class: str = "tall"
    color_id: int = 0

    @cached_property
    def footprint(self) -> Rect:
        return Rect(self.x, self.y, self.x + self.w, self.y + self.h)


@dataclass(frozen=True)
class DynamicEntity:
    id: str
    kind: str
    radius: int
    waypoints: tuple[tuple[int, int], ...]
    speed: float = 0.0
    phase: float = 0.0

    @property
    def segments(self) -> list[tuple[Point, Point]]:
        pts = self.waypoints
        return [(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))]

    @cached_property
    def path_length(self) -> float:
        return sum(math.dist(a, b) for a, b in self.segments)

    def position_at(self, phase: float) -> tuple[float, float]:
        """Linear interpolation along the closed waypoint loop."""
        length = self.path_length
        if length == 0:
            return (float(self.waypoints[0][0]), float(self.waypoints[0][1]))
        s = phase % length
        for a, b in self.segments:
            seg = math.dist(a, b)
            if s <= seg and seg > 0:
                f = s / seg
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            s -= seg
        return (float(self.waypoints[0][0]), float(self.waypoints[0][1]))


@dataclass(frozen=True)
class StartTargetPair:
    start: tuple[int, int]
    start_theta: int
    target: tuple[int, int]
    difficulty: str = "medium"


@dataclass(frozen=True)
class SceneConfig:
    map: MapSpec = field(default_factory=MapSpec)
    obstacles: tuple[Obstacle, ...] = ()
    entities: tuple[DynamicEntity, ...] = ()
    pairs: tuple[StartTargetPair, ...] = ()
    name: str = "scene"
    seed: int | None = None

    def canonical(self) -> "SceneConfig":
        return replace(
            self,
            obstacles=tuple(sorted(self.obstacles, key=lambda o: o.id)),
            entities=tuple(sorted(self.entities, key=lambda e: e.id)),
        )

    def static(self) -> "SceneConfig":
        """Same scene with every entity frozen in place."""
        return replace(self, entities=tuple(replace(e, speed=0) for e in self.entities))


@dataclass(frozen=True)
class Violation:
    subject: str
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        msg = f"{self.subject}: {self.rule.replace('-', ' ')}"
        return f"{msg} ({self.detail})" if self.detail else msg


# -- scene document ------------------------------------------------------------

_MAP_FIELDS = {"width", "height", "meters_per_pixel", "agent_radius"}
_OBSTACLE_FIELDS = {"id", "kind", "x", "y", "w", "h", "height_class", "color_id"}
_ENTITY_FIELDS = {"id", "kind", "radius", "speed", "phase", "waypoints"}
_PAIR_FIELDS = {"start", "theta", "target", "difficulty"}
_TOP_FIELDS = {"map", "obstacles", "entities", "pairs", "name", "seed"}


def _check_fields(obj: Any, allowed: set[str], required: set[str], where: str) -> dict:
    if not isinstance(obj, dict):
        raise SceneError(f"{where}: expected an object", key=where)
    for k in obj:
        if k not in allowed:
            raise SceneError(f"{where}.{k}: unknown field", key=f"{where}.{k}")
    for k in sorted(required):
        if k not in obj:
            raise SceneError(f"{where}.{k}: missing field", key=f"{where}.{k}")
    return obj


def _int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SceneError(f"{key}: expected an integer", key=key)
    return value


def _num(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SceneError(f"{key}: expected a number", key=key)
    return value


def _str(value: Any, key: str, choices: Iterable[str] | None = None) -> str:
    if not isinstance(value, str):
        raise SceneError(f"{key}: expected a string", key=key)
    if choices is not None and value not in choices:
        raise SceneError(f"{key}: value {value!r} not one of {sorted(choices)}", key=key)
    return value


def _point(value: Any, key: str) -> tuple[int, int]:
    if not isinstance(value, list) or len(value) != 2:
        raise SceneError(f"{key}: expected [x, y]", key=key)
    return (_int(value[0], f"{key}[0]"), _int(value[1], f"{key}[1]"))


def scene_from_dict(doc: Any) -> SceneConfig:
    doc = _check_fields(doc, _TOP_FIELDS, {"map", "pairs"}, "scene")
    m = _check_fields(doc["map"], _MAP_FIELDS, {"width", "height"}, "map")
    mapspec = MapSpec(
        width=_int(m["width"], "map.width"),
        height=_int(m["height"], "map.height"),
        meters_per_pixel=_num(m.get("meters_per_pixel", 1 / 34), "map.meters_per_pixel"),
        agent_radius=_int(m.get("agent_radius", DEFAULT_AGENT_RADIUS), "map.agent_radius"),
    )
    obstacles = []
    for i, o in enumerate(doc.get("obstacles", [])):
        key = f"obstacles[{i}]"
        o = _check_fields(o, _OBSTACLE_FIELDS, {"id", "x", "y", "w", "h"}, key)
        obstacles.append(
            Obstacle(
                id=_str(o["id"], f"{key}.id"),
                x=_int(o["x"], f"{key}.x"),
                y=_int(o["y"], f"{key}.y"),
                w=_int(o["w"], f"{key}.w"),
                h=_int(o["h"], f"{key}.h"),
                kind=_str(o.get("kind", "shelf"), f"{key}.kind", OBSTACLE_KINDS),
                height_class=_str(o.get("height_class", "tall"), f"{key}.height_class", HEIGHT_CLASSES),
                color_id=_int(o.get("color_id", 0), f"{key}.color_id"),
            )
        )
    entities = []
    for i, e in enumerate(doc.get("entities", [])):
        key = f"entities[{i}]"
        e = _check_fields(e, _ENTITY_FIELDS, {"id", "kind", "radius", "waypoints"}, key)
        if not isinstance(e["waypoints"], list):
            raise SceneError(f"{key}.waypoints: expected a list", key=f"{key}.waypoints")
        entities.append(
            DynamicEntity(
                id=_str(e["id"], f"{key}.id"),
                kind=_str(e["kind"], f"{key}.kind", ENTITY_KINDS),
                radius=_int(e["radius"], f"{key}.radius"),
                waypoints=tuple(_point(p, f"{key}.waypoints[{j}]") for j, p in enumerate(e["waypoints"])),
                speed=_num(e.get("speed", 0), f"{key}.speed"),
                phase=_num(e.get("phase", 0), f"{key}.phase"),
            )
        )
    pairs = []
    if not isinstance(doc["pairs"], list):
        raise SceneError("pairs: expected a list", key="pairs")
    for i, p in enumerate(doc["pairs"]):
        key = f"pairs[{i}]"
        p = _check_fields(p, _PAIR_FIELDS, {"start", "theta", "target"}, key)
        pairs.append(
            StartTargetPair(
                start=_point(p["start"], f"{key}.start"),
                start_theta=_int(p["theta"], f"{key}.theta"),
                target=_point(p["target"], f"{key}.target"),
                difficulty=_str(p.get("difficulty", "medium"), f"{key}.difficulty", DIFFICULTIES),
            )
        )
    seed = doc.get("seed")
    if seed is not None:
        seed = _int(seed, "seed")
    return SceneConfig(
        map=mapspec,
        obstacles=tuple(obstacles),
        entities=tuple(entities),
        pairs=tuple(pairs),
        name=_str(doc.get("name", "scene"), "name"),
        seed=seed,
    )


def parse_scene(text: str) -> SceneConfig:
    """Parse a scene document; raise `SceneError` on syntax, schema or range errors."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None
    cfg = scene_from_dict(doc)
    problems = validate_scene(cfg, check_reachability=False)
    if problems:
        v = problems[0]
        raise SceneError(str(v), key=v.subject)
    return cfg


def scene_to_dict(cfg: SceneConfig) -> dict[str, Any]:
    cfg = cfg.canonical()
    return {
        "entities": [
            {
                "id": e.id,
                "kind": e.kind,
                "phase": e.phase,
                "radius": e.radius,
                "speed": e.speed,
                "waypoints": [list(p) for p in e.waypoints],
            }
            for e in cfg.entities
        ],
        "map": {
            "agent_radius": cfg.map.agent_radius,
            "height": cfg.map.height,
            "meters_per_pixel": cfg.map.meters_per_pixel,
            "width": cfg.map.width,
        },
        "name": cfg.name,
        "obstacles": [
            {
                "color_id": o.color_id,
                "h": o.h,
                "height_class": o.height_class,
                "id": o.id,
                "kind": o.kind,
                "w": o.w,
                "x": o.x,
                "y": o.y,
            }
            for o in cfg.obstacles
        ],
        "pairs": [
            {
                "difficulty": p.difficulty,
                "start": list(p.start),
                "target": list(p.target),
                "theta": p.start_theta,
            }
            for p in cfg.pairs
        ],
        "seed": cfg.seed,
    }


def serialize_scene(cfg: SceneConfig) -> str:
    """Canonical text: sorted keys, one list item per line, trailing newline."""
    doc = scene_to_dict(cfg)
    lines = ["{"]
    keys = sorted(doc)
    for n, k in enumerate(keys):
        comma = "," if n < len(keys) - 1 else ""
        v = doc[k]
        if isinstance(v, list) and v:
            lines.append(f"  {json.dumps(k)}: [")
            for j, item in enumerate(v):
                sep = "," if j < len(v) - 1 else ""
                lines.append(f"    {json.dumps(item, sort_keys=True, ensure_ascii=False)}{sep}")
            lines.append(f"  ]{comma}")
        else:
            lines.append(f"  {json.dumps(k)}: {json.dumps(v, sort_keys=True, ensure_ascii=False)}{comma}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def scene_digest(cfg: SceneConfig) -> str:
    return hashlib.sha256(serialize_scene(cfg).encode("utf-8")).hexdigest()


def load_scene(path) -> SceneConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scene(fh.read())


# -- static collision and lattice search ----------------------------------------


def parked_discs(scene: SceneConfig) -> list[tuple[tuple[float, float], float]]:
    """Entities with zero speed never move, so they count as static geometry."""
    return [(e.position_at(e.phase), e.radius) for e in scene.entities if e.speed == 0]


def disc_clear(scene: SceneConfig, p: Point, radius: float) -> bool:
    """True iff a disc at p lies inside the map and overlaps no static footprint or parked entity."""
    m = scene.map
    if p[0] - radius < 0 or p[1] - radius < 0 or p[0] + radius > m.width or p[1] + radius > m.height:
        return False
    if any(math.dist(p, c) < radius + r for c, r in parked_discs(scene)):
        return False
    return all(point_rect_distance(p, o.footprint) >= radius for o in scene.obstacles)


def static_move_blocked(scene: SceneConfig, a: Point, b: Point, radius: float) -> bool:
    """Swept-disc test of the straight move a -> b against bounds and static footprints."""
    m = scene.map
    for p in (a, b):
        if p[0] - radius < 0 or p[1] - radius < 0 or p[0] + radius > m.width or p[1] + radius > m.height:
            return True
    lo_x, hi_x = min(a[0], b[0]) - radius, max(a[0], b[0]) + radius
    lo_y, hi_y = min(a[1], b[1]) - radius, max(a[1], b[1]) + radius
    for o in scene.obstacles:
        fp = o.footprint
        if fp.x0 > hi_x or fp.x1 < lo_x or fp.y0 > hi_y or fp.y1 < lo_y:
            continue
        if segment_rect_distance(a, b, fp) < radius:
            return True
    return False


class StaticLattice:
    """The grid of positions an agent can reach from a start with 34 px axis moves.

    Forward-move feasibility is cached, so one instance can serve many searches.
    """

    def __init__(self, scene: SceneConfig, radius: float | None = None):
        self.scene = scene
        self.radius = scene.map.agent_radius if radius is None else radius
        self.parked = parked_discs(scene)
        self._edges: dict[tuple[int, int, int], bool] = {}

    def can_move(self, x: int, y: int, theta: int) -> bool:
        key = (x, y, theta)
        free = self._edges.get(key)
        if free is None:
            dx, dy = HEADING_VECTORS[theta]
            b = (x + dx * STEP_PX, y + dy * STEP_PX)
            free = not static_move_blocked(self.scene, (x, y), b, self.radius) and all(
                point_segment_distance(c, (x, y), b) >= self.radius + r for c, r in self.parked
            )
            self._edges[key] = free
        return free

    def reachable(self, start: tuple[int, int]) -> set[tuple[int, int]]:
        seen = {start}
        queue = deque([start])
        while queue:
            x, y = queue.popleft()
            for th in HEADINGS:
                if self.can_move(x, y, th):
                    dx, dy = HEADING_VECTORS[th]
                    nxt = (x + dx * STEP_PX, y + dy * STEP_PX)
                    if nxt not in seen:
                        seen.add(nxt)
                        queue.append(nxt)
        return seen

    def action_counts(self, start: tuple[int, int], theta: int) -> dict[tuple[int, int, int], int]:
        """Breadth-first minimal action count (forward and 90 degree turns) to every pose."""
        origin = (start[0], start[1], theta)
        dist = {origin: 0}
        queue = deque([origin])
        while queue:
            x, y, th = queue.popleft()
            d = dist[(x, y, th)]
            nbrs = [(x, y, (th + 90) % 360), (x, y, (th - 90) % 360)]
            if self.can_move(x, y, th):
                dx, dy = HEADING_VECTORS[th]
                nbrs.append((x + dx * STEP_PX, y + dy * STEP_PX, th))
            for n in nbrs:
                if n not in dist:
                    dist[n] = d + 1
                    queue.append(n)
        return dist


def min_actions_to_target(
    scene: SceneConfig, start: tuple[int, int], theta: int, target: Point, delta: float = SUCCESS_DELTA
) -> int | None:
    """Fewest forward/turn actions that bring the agent within delta of target (stop excluded)."""
    counts = StaticLattice(scene).action_counts(start, theta)
    best = [c for (x, y, _), c in counts.items() if math.dist((x, y), target) <= delta]
    return min(best) if best else None


# -- validation ---------------------------------------------------------------


def validate_scene(cfg: SceneConfig, delta: float = SUCCESS_DELTA, check_reachability: bool = True) -> list[Violation]:
    out: list[Violation] = []
    m = cfg.map
    if m.width <= 0:
        out.append(Violation("map.width", "non-positive-dimension"))
    if m.height <= 0:
        out.append(Violation("map.height", "non-positive-dimension"))
    if m.meters_per_pixel <= 0:
        out.append(Violation("map.meters_per_pixel", "non-positive-scale"))
    if m.agent_radius <= 0:
        out.append(Violation("map.agent_radius", "non-positive-radius"))
    if out:
        return out
    bounds = m.bounds

    seen_ids: set[str] = set()
    for i, o in enumerate(cfg.obstacles):
        subject = f"obstacles[{o.id}]"
        if o.id in seen_ids:
            out.append(Violation(subject, "duplicate-id"))
        seen_ids.add(o.id)
        if o.w <= 0 or o.h <= 0:
            out.append(Violation(subject, "non-positive-area"))
        fp = o.footprint
        if fp.x0 < 0 or fp.y0 < 0 or fp.x1 > m.width or fp.y1 > m.height:
            out.append(Violation(subject, "footprint-out-of-bounds"))

    for e in cfg.entities:
        subject = f"entities[{e.id}]"
        if e.id in seen_ids:
            out.append(Violation(subject, "duplicate-id"))
        seen_ids.add(e.id)
        if len(e.waypoints) < 2:
            out.append(Violation(subject, "too-few-waypoints"))
        if e.radius <= 0:
            out.append(Violation(subject, "non-positive-radius"))
        if e.speed < 0:
            out.append(Violation(subject, "negative-speed"))
        for j, p in enumerate(e.waypoints):
            if not bounds.contains(p):
                out.append(Violation(f"{subject}.waypoints[{j}]", "waypoint-out-of-bounds", f"{p}"))
            elif any(o.footprint.contains(p) for o in cfg.obstacles):
                out.append(Violation(f"{subject}.waypoints[{j}]", "waypoint-in-obstacle", f"{p}"))
        length = e.path_length if len(e.waypoints) >= 2 else 0.0
        if not (0 <= e.phase < length or (length == 0 and e.phase == 0)):
            out.append(Violation(subject, "phase-out-of-range", f"phase {e.phase}, path length {length}"))

    lattice = StaticLattice(cfg)
    for i, p in enumerate(cfg.pairs):
        subject = f"pairs[{i}]"
        if p.start_theta not in HEADINGS:
            out.append(Violation(subject, "bad-heading", f"{p.start_theta}"))
        start_ok = bounds.contains(p.start) and not any(o.footprint.contains(p.start) for o in cfg.obstacles)
        if not start_ok:
            out.append(Violation(subject, "start-in-obstacle", f"{p.start}"))
        elif not disc_clear(cfg, p.start, m.agent_radius):
            out.append(Violation(subject, "start-overlaps-obstacle", f"{p.start}"))
        if not bounds.contains(p.target):
            out.append(Violation(subject, "target-out-of-bounds", f"{p.target}"))
        elif any(o.footprint.contains(p.target) for o in cfg.obstacles):
            out.append(Violation(subject, "target-in-obstacle", f"{p.target}"))
        if math.dist(p.start, p.target) <= delta:
            out.append(Violation(subject, "pair-within-delta", f"delta {delta}"))
        if check_reachability and start_ok and disc_clear(cfg, p.start, m.agent_radius):
            cells = lattice.reachable(p.start)
            if not any(math.dist(c, p.target) <= delta for c in cells):
                out.append(Violation(subject, "unreachable-pair"))
    return out


# -- occupancy grid -----------------------------------------------------------


def occupancy_grid(cfg: SceneConfig, cell_px: int, inflate: float | None = None) -> np.ndarray:
    """Boolean grid, shape (rows, cols); a cell is blocked iff it overlaps an inflated footprint.

    Footprints are grown by the agent radius on every side (square corners); overlap
    means positive area.
    """
    if cell_px < 1:
        raise ValueError("cell_px must be >= 1")
    r = cfg.map.agent_radius if inflate is None else inflate
    cols = math.ceil(cfg.map.width / cell_px)
    rows = math.ceil(cfg.map.height / cell_px)
    x0 = np.arange(cols) * cell_px
    x1 = np.minimum(x0 + cell_px, cfg.map.width)
    y0 = np.arange(rows) * cell_px
    y1 = np.minimum(y0 + cell_px, cfg.map.height)
    grid = np.zeros((rows, cols), dtype=bool)
    for o in cfg.obstacles:
        fp = o.footprint.inflate(r)
        cx = (x0 < fp.x1) & (x1 > fp.x0)
        cy = (y0 < fp.y1) & (y1 > fp.y0)
        grid |= cy[:, None] & cx[None, :]
    return grid


# -- procedural generation ----------------------------------------------------


@dataclass(frozen=True)
class GeneratorParams:
    width: int = 1024
    height: int = 512
    aisle_count: int = 3
    shelf_rows: int = 2
    clutter_density: float = 0.04
    entity_count: int = 4
    n_pairs: int = 4
    max_pair_actions: int = 45
    max_retries: int = 20

    def check(self) -> None:
        ranges = {
            "width": (400, 4096),
            "height": (256, 4096),
            "aisle_count": (1, 6),
            "shelf_rows": (1, 4),
            "clutter_density": (0.0, 1.0),
            "entity_count": (0, 10),
            "n_pairs": (1, 12),
            "max_pair_actions": (4, 200),
            "max_retries": (1, 1000),
        }
        for name, (lo, hi) in ranges.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


ENTITY_PRESETS = {
    # kind: (radius px, speed px/tick)
    "worker": (10, 4),
    "forklift": (18, 8),
    "robot": (14, 6),
}

_CLUTTER = (
    ("barrel", 22, 22, "low"),
    ("container", 56, 34, "tall"),
    ("misc", 30, 30, "low"),
)

WALL_THICKNESS = 6


class _Retry(Exception):
    pass


def generate_scene(seed: int, params: GeneratorParams | None = None) -> SceneConfig:
    """Deterministic warehouse layout for (seed, params); raises `GenerationError` if over-constrained."""
    params = params or GeneratorParams()
    params.check()
    for attempt in range(params.max_retries):
        rng = random.Random(f"warenav:{seed}:{attempt}")
        try:
            scene = _generate_once(rng, seed, params)
        except _Retry:
            continue
        if not validate_scene(scene) and not validate_scene(scene.static()):
            return scene
    raise GenerationError(f"no valid scene for seed={seed} after {params.max_retries} attempts")


def _generate_once(rng: random.Random, seed: int, p: GeneratorParams) -> SceneConfig:
    mapspec = MapSpec(width=p.width, height=p.height)
    obstacles = _walls(p) + _shelves(rng, p)
    obstacles += _clutter(rng, p, obstacles)
    base = SceneConfig(map=mapspec, obstacles=tuple(obstacles), name=f"gen-{seed}", seed=seed)
    entities = tuple(_entity(rng, base, i) for i in range(p.entity_count))
    # choose pairs against the frozen variant so they also hold with entities parked
    pairs = _pairs(rng, replace(base, entities=entities).static(), p)
    return replace(base, entities=entities, pairs=pairs).canonical()


def _walls(p: GeneratorParams) -> list[Obstacle]:
    t = WALL_THICKNESS
    return [
        Obstacle("wall-n", 0, 0, p.width, t, "wall", "tall", 0),
        Obstacle("wall-s", 0, p.height - t, p.width, t, "wall", "tall", 0),
        Obstacle("wall-w", 0, t, t, p.height - 2 * t, "wall", "tall", 0),
        Obstacle("wall-e", p.width - t, t, t, p.height - 2 * t, "wall", "tall", 0),
    ]


def _shelves(rng: random.Random, p: GeneratorParams) -> list[Obstacle]:
    out = []
    spacing = p.height / (p.shelf_rows + 1)
    thickness = int(min(40, spacing * 0.35))
    for k in range(p.shelf_rows):
        cy = round(spacing * (k + 1) + rng.uniform(-0.08, 0.08) * spacing)
        y0 = cy - thickness // 2
        left = rng.randint(70, 110)
        right = p.width - rng.randint(70, 110)
        span = right - left
        cuts = []
        for j in range(p.aisle_count):
            centre = left + span * (j + 1) / (p.aisle_count + 1) + rng.uniform(-0.1, 0.1) * span / (p.aisle_count + 1)
            gap = rng.randint(76, 110)
            cuts.append((round(centre - gap / 2), round(centre + gap / 2)))
        x = left
        for j, (g0, g1) in enumerate(cuts + [(right, right)]):
            if g0 - x >= 40:
                out.append(Obstacle(f"shelf-{k}-{j}", x, y0, g0 - x, thickness, "shelf", "tall", k % 4))
            x = g1
    return out


def _clutter(rng: random.Random, p: GeneratorParams, existing: list[Obstacle]) -> list[Obstacle]:
    if p.clutter_density <= 0:
        return []
    occupied = sum(o.footprint.area for o in existing if o.kind == "shelf")
    inner = (p.width - 2 * WALL_THICKNESS) * (p.height - 2 * WALL_THICKNESS)
    goal = p.clutter_density * (inner - occupied)
    placed: list[Obstacle] = []
    area = 0.0
    attempts = 0
    while area < goal:
        attempts += 1
        if attempts > 400 + 60 * len(placed):
            raise _Retry()
        kind, w, h, hc = rng.choice(_CLUTTER)
        if rng.random() < 0.5:
            w, h = h, w
        x = rng.randint(WALL_THICKNESS, p.width - WALL_THICKNESS - w)
        y = rng.randint(WALL_THICKNESS, p.height - WALL_THICKNESS - h)
        cand = Rect(x, y, x + w, y + h)
        if any(cand.overlaps(o.footprint.inflate(4)) for o in existing + placed):
            continue
        placed.append(Obstacle(f"{kind}-{len(placed)}", x, y, w, h, kind, hc, len(placed) % 3))
        area += w * h
    return placed


def _entity(rng: random.Random, scene: SceneConfig, index: int) -> DynamicEntity:
    kind = ENTITY_KINDS[index % len(ENTITY_KINDS)]
    radius, speed = ENTITY_PRESETS[kind]
    m = scene.map
    for _ in range(300):
        a = (rng.randint(radius, m.width - radius), rng.randint(radius, m.height - radius))
        if not disc_clear(scene, a, radius + 4):
            continue
        length = rng.randint(120, 400)
        if rng.random() < 0.5:
            b = (min(max(a[0] + rng.choice((-1, 1)) * length, radius + 8), m.width - radius - 8), a[1])
        else:
            b = (a[0], min(max(a[1] + rng.choice((-1, 1)) * length, radius + 8), m.height - radius - 8))
        if math.dist(a, b) < 60 or static_move_blocked(scene, a, b, radius + 4):
            continue
        total = 2 * int(math.dist(a, b))
        return DynamicEntity(
            id=f"{kind}-{index}",
            kind=kind,
            radius=radius,
            waypoints=(a, b),
            speed=speed,
            phase=rng.randrange(total),
        )
    raise _Retry()


def _pairs(rng: random.Random, scene: SceneConfig, p: GeneratorParams) -> tuple[StartTargetPair, ...]:
    m = scene.map
    r = m.agent_radius
    lattice = StaticLattice(scene)
    pool: list[tuple[int, StartTargetPair]] = []
    want = max(3 * p.n_pairs, 6)
    for _ in range(40):
        if len(pool) >= want:
            break
        start = (rng.randint(r, m.width - r), rng.randint(r, m.height - r))
        if not disc_clear(scene, start, r + 2):
            continue
        theta = rng.choice(HEADINGS)
        counts = lattice.action_counts(start, theta)
        cells = sorted({(x, y) for x, y, _ in counts})
        for _ in range(3):
            cx, cy = rng.choice(cells)
            target = (cx + rng.randint(-8, 8), cy + rng.randint(-8, 8))
            if not m.bounds.contains(target) or any(o.footprint.contains(target) for o in scene.obstacles):
                continue
            if math.dist(start, target) <= 3 * STEP_PX:
                continue
            near = [c for (x, y, _), c in counts.items() if math.dist((x, y), target) <= SUCCESS_DELTA]
            if not near or min(near) > p.max_pair_actions:
                continue
            pool.append((min(near), StartTargetPair(start, theta, target)))
    if len(pool) < p.n_pairs:
        raise _Retry()
    pool.sort(key=lambda t: (t[0], t[1].start, t[1].target))
    labelled = [replace(pair, difficulty=DIFFICULTIES[min(2, 3 * i // len(pool))]) for i, (_, pair) in enumerate(pool)]
    if p.n_pairs == 1:
        picks = [len(pool) // 2]
    else:
        picks = [round(j * (len(pool) - 1) / (p.n_pairs - 1)) for j in range(p.n_pairs)]
    return tuple(labelled[i] for i in picks)
