"""Agent kinematics, collision semantics and entity motion."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

from .geometry import Point, point_segment_distance
from .world import (
    HEADING_VECTORS,
    HEADINGS,
    STEP_PX,
    DynamicEntity,
    SceneConfig,
    static_move_blocked,
)


class Action(str, Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"

    @property
    def label(self) -> str:
        """Human-facing spelling used in prompts and history lines."""
        return self.value.replace("_", " ")


ALL_ACTIONS = (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT, Action.STOP)
COMPASS = {0: "West", 90: "North", 180: "East", 270: "South"}


@dataclass(frozen=True)
class AgentPose:
    x: int
    y: int
    theta: int
    radius: int = 10

    def __post_init__(self):
        if self.theta not in HEADINGS:
            raise ValueError(f"heading must be one of {HEADINGS}, got {self.theta}")

    @property
    def position(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass(frozen=True)
class WorldState:
    pose: AgentPose
    entity_phases: tuple[float, ...]
    tick: int
    target: tuple[int, int]


@dataclass(frozen=True)
class StepOutcome:
    state: WorldState
    collided: bool
    attempted_forward: bool
    moved: bool
    entity_contact: bool = False


def apply_turn(pose: AgentPose, direction: str) -> AgentPose:
    if direction == "right":
        return replace(pose, theta=(pose.theta + 90) % 360)
    if direction == "left":
        return replace(pose, theta=(pose.theta - 90) % 360)
    raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")


def forward_target(pose: AgentPose) -> tuple[int, int]:
    dx, dy = HEADING_VECTORS[pose.theta]
    return (pose.x + dx * STEP_PX, pose.y + dy * STEP_PX)


def entity_positions(scene: SceneConfig, phases: tuple[float, ...]) -> list[tuple[float, float]]:
    return [e.position_at(ph) for e, ph in zip(scene.entities, phases)]


def check_blocked(
    candidate: Point,
    radius: float,
    scene: SceneConfig,
    entity_phases: tuple[float, ...],
    origin: Point | None = None,
) -> bool:
    """Whether a disc sweeping from origin to candidate hits anything.

    Without an origin only the candidate position is tested.
    """
    a = candidate if origin is None else origin
    if static_move_blocked(scene, a, candidate, radius):
        return True
    for ent, phase in zip(scene.entities, entity_phases):
        c = ent.position_at(phase)
        if point_segment_distance(c, a, candidate) < radius + ent.radius:
            return True
    return False


def advance_entity(entity: DynamicEntity, phase: float) -> float:
    length = entity.path_length
    if length == 0:
        return phase
    return (phase + entity.speed) % length


def distance_to_target(pose: AgentPose, target: Point) -> float:
    return math.hypot(target[0] - pose.x, target[1] - pose.y)


def initial_state(scene: SceneConfig, pair_index: int) -> WorldState:
    pair = scene.pairs[pair_index]
    pose = AgentPose(pair.start[0], pair.start[1], pair.start_theta, scene.map.agent_radius)
    return WorldState(pose, tuple(e.phase for e in scene.entities), 0, pair.target)


def step_world(state: WorldState, action: Action, scene: SceneConfig) -> StepOutcome:
    """Resolve the agent's action, then advance every entity by one tick."""
    action = Action(action)
    if action is Action.STOP:
        raise ValueError("stop is handled by the episode runner, not step_world")
    pose = state.pose
    collided = moved = False
    if action is Action.TURN_LEFT:
        pose = apply_turn(pose, "left")
    elif action is Action.TURN_RIGHT:
        pose = apply_turn(pose, "right")
    else:
        cand = forward_target(pose)
        if check_blocked(cand, pose.radius, scene, state.entity_phases, origin=pose.position):
            collided = True
        else:
            pose = replace(pose, x=cand[0], y=cand[1])
            moved = True
    phases = tuple(advance_entity(e, ph) for e, ph in zip(scene.entities, state.entity_phases))
    contact = any(
        math.dist(pose.position, e.position_at(ph)) < pose.radius + e.radius
        for e, ph in zip(scene.entities, phases)
    )
    new_state = WorldState(pose, phases, state.tick + 1, state.target)
    return StepOutcome(new_state, collided, action is Action.FORWARD, moved, contact)
