import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box_scene, generated
from warenav.world import (
    DIFFICULTIES,
    DynamicEntity,
    GeneratorParams,
    MapSpec,
    Obstacle,
    SceneConfig,
    SceneError,
    StartTargetPair,
    disc_clear,
    generate_scene,
    min_actions_to_target,
    occupancy_grid,
    parse_scene,
    scene_digest,
    scene_to_dict,
    serialize_scene,
    validate_scene,
)


def _rules(scene, **kw):
    return {v.rule for v in validate_scene(scene, **kw)}


# -- document format ---------------------------------------------------------


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_serialize_parse_roundtrip(seed):
    scene = generated(seed % 6)
    text = serialize_scene(scene)
    again = parse_scene(text)
    assert again == scene.canonical()
    assert serialize_scene(again) == text


def test_serialization_ignores_declaration_order(box):
    shuffled = replace(box, obstacles=box.obstacles[::-1])
    assert serialize_scene(shuffled) == serialize_scene(box)
    assert scene_digest(shuffled) == scene_digest(box)


def test_syntax_error_reports_position():
    with pytest.raises(SceneError) as err:
        parse_scene('{\n  "map": {"width": 10,,}\n}')
    assert err.value.line == 2 and err.value.column is not None


def test_unknown_field_rejected(box):
    doc = scene_to_dict(box)
    doc["obstacles"][0]["colour"] = 1
    with pytest.raises(SceneError, match="colour"):
        parse_scene(json.dumps(doc))


def test_waypoint_out_of_bounds_message(box):
    doc = scene_to_dict(box)
    doc["entities"][0]["waypoints"][1] = [900, 200]
    with pytest.raises(SceneError, match="waypoint out of bounds"):
        parse_scene(json.dumps(doc))


# -- validation --------------------------------------------------------------


def test_valid_scenes_have_no_violations(box):
    assert validate_scene(box) == []
    assert validate_scene(generated(0)) == []


@pytest.mark.parametrize(
    "mutate, rule",
    [
        (lambda s: replace(s, obstacles=s.obstacles * 2), "duplicate-id"),
        (lambda s: replace(s, obstacles=(Obstacle("z", 10, 10, 0, 5),)), "non-positive-area"),
        (lambda s: replace(s, obstacles=(Obstacle("z", 330, 10, 40, 5),)), "footprint-out-of-bounds"),
        (lambda s: replace(s, pairs=(StartTargetPair((150, 50), 0, (255, 51)),)), "start-in-obstacle"),
        (lambda s: replace(s, pairs=(StartTargetPair((130, 51), 0, (255, 51)),)), "start-overlaps-obstacle"),
        (lambda s: replace(s, pairs=(StartTargetPair((51, 51), 0, (150, 50)),)), "target-in-obstacle"),
        (lambda s: replace(s, pairs=(StartTargetPair((51, 51), 0, (60, 51)),)), "pair-within-delta"),
        (lambda s: replace(s, pairs=(StartTargetPair((51, 51), 45, (255, 51)),)), "bad-heading"),
        (lambda s: replace(s, entities=(replace(s.entities[0], phase=1e6),)), "phase-out-of-range"),
        (lambda s: replace(s, entities=(replace(s.entities[0], waypoints=((150, 50), (300, 200))),)), "waypoint-in-obstacle"),
        (lambda s: replace(s, map=replace(s.map, width=0)), "non-positive-dimension"),
    ],
)
def test_rule_violations(mutate, rule):
    assert rule in _rules(mutate(box_scene()))


def test_sealed_target_is_unreachable():
    ring = (
        Obstacle("n", 200, 60, 80, 10, "wall"),
        Obstacle("s", 200, 130, 80, 10, "wall"),
        Obstacle("w", 200, 60, 10, 80, "wall"),
        Obstacle("e", 270, 60, 10, 80, "wall"),
    )
    scene = SceneConfig(map=MapSpec(340, 238), obstacles=ring, pairs=(StartTargetPair((51, 51), 0, (240, 100)),))
    assert "unreachable-pair" in _rules(scene)


# -- occupancy grid ----------------------------------------------------------


def _grid_oracle(scene, cell, r):
    """Sample every half-pixel centre; a cell is blocked iff any interior sample lies strictly inside."""
    rows, cols = math.ceil(scene.map.height / cell), math.ceil(scene.map.width / cell)
    out = np.zeros((rows, cols), dtype=bool)
    for o in scene.obstacles:
        f = o.footprint
        x0, x1, y0, y1 = f.x0 - r, f.x1 + r, f.y0 - r, f.y1 + r
        for px in range(max(0, math.floor(x0)), min(scene.map.width, math.ceil(x1))):
            cx = px + 0.5
            if not x0 < cx < x1:
                continue
            for py in range(max(0, math.floor(y0)), min(scene.map.height, math.ceil(y1))):
                if y0 < py + 0.5 < y1:
                    out[py // cell, px // cell] = True
    return out


@pytest.mark.parametrize("cell", [7, 17, 34])
def test_occupancy_grid_matches_pixel_oracle(cell):
    scene = generated(1)
    grid = occupancy_grid(scene, cell)
    assert grid.shape == (math.ceil(512 / cell), math.ceil(1024 / cell))
    assert np.array_equal(grid, _grid_oracle(scene, cell, scene.map.agent_radius))


@given(st.integers(1, 40), st.integers(0, 20))
def test_occupancy_is_monotone_in_inflation(cell, r):
    scene = box_scene()
    small = occupancy_grid(scene, cell, inflate=r)
    large = occupancy_grid(scene, cell, inflate=r + 3)
    assert not (small & ~large).any()


# -- generator ---------------------------------------------------------------


def test_generation_is_deterministic():
    assert serialize_scene(generate_scene(42)) == serialize_scene(generate_scene(42))
    assert scene_digest(generate_scene(42)) != scene_digest(generate_scene(43))


@pytest.mark.parametrize("seed", range(6))
def test_generated_scenes_validate_static_and_dynamic(seed):
    scene = generated(seed)
    assert validate_scene(scene) == []
    assert validate_scene(scene.static()) == []
    assert all(e.speed > 0 for e in scene.entities)
    assert len(scene.pairs) == 4


def test_difficulty_follows_action_count():
    scene = generated(2)
    cost = {d: [] for d in DIFFICULTIES}
    for p in scene.pairs:
        cost[p.difficulty].append(min_actions_to_target(scene.static(), p.start, p.start_theta, p.target))
    present = [max(cost[d]) for d in DIFFICULTIES if cost[d]]
    lows = [min(cost[d]) for d in DIFFICULTIES if cost[d]]
    assert all(hi <= lo for hi, lo in zip(present, lows[1:]))


@pytest.mark.parametrize(
    "params",
    [GeneratorParams(aisle_count=0), GeneratorParams(shelf_rows=9), GeneratorParams(clutter_density=1.5)],
)
def test_generator_rejects_bad_params(params):
    with pytest.raises(ValueError):
        generate_scene(0, params)


def test_generator_knobs_change_layout():
    sparse = generate_scene(5, GeneratorParams(entity_count=0, clutter_density=0.0))
    assert sparse.entities == ()
    assert validate_scene(sparse) == []


def test_parked_entity_counts_as_geometry():
    ent = DynamicEntity("bot", "robot", 14, ((200, 51), (300, 51)), speed=0, phase=0)
    parked = replace(box_scene(), entities=(ent,), obstacles=())
    moving = replace(parked, entities=(replace(ent, speed=6),))
    assert not disc_clear(parked, (210, 51), 10)
    assert disc_clear(moving, (210, 51), 10)
    assert disc_clear(moving.static(), (210, 51), 10) is False
