"""Decision makers for the episode runner: scripted baselines and the model-backed agent."""

from __future__ import annotations

import heapq
import itertools
import math
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import ALL_ACTIONS, Action, WorldState, distance_to_target, entity_positions
from .geometry import point_segment_distance
from .protocol import DEFAULT_ACTION, AgentDecision, ModelClient, ModelReply, PromptBundle, parse_decision
from .sensors import DepthProfile
from .world import HEADING_VECTORS, HEADINGS, STEP_PX, SUCCESS_DELTA, SceneConfig, StaticLattice


@dataclass(frozen=True, eq=False)
class Observation:
    state: WorldState
    scene: SceneConfig
    profile: DepthProfile | None
    bundle: PromptBundle


def _angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % 360
    return min(d, 360 - d)


def target_bearing(state: WorldState) -> float:
    """Heading angle (0 = West, 90 = North, ...) pointing from the agent to the target."""
    dx = state.target[0] - state.pose.x
    dy = state.target[1] - state.pose.y
    return math.degrees(math.atan2(-dy, -dx)) % 360


def _dominant_heading(state: WorldState) -> int:
    dx = state.target[0] - state.pose.x
    dy = state.target[1] - state.pose.y
    if abs(dx) >= abs(dy):
        return 180 if dx > 0 else 0
    return 270 if dy > 0 else 90


def forward_looks_blocked(profile: DepthProfile | None, radius: float, cone: float = 10.0) -> bool:
    if profile is None:
        return False
    ahead = np.abs(profile.angles) <= cone
    if not ahead.any():
        return False
    return bool(profile.distances[ahead].min() < STEP_PX + radius)


def greedy_policy(state: WorldState, profile: DepthProfile | None = None, delta: float = SUCCESS_DELTA) -> Action:
    if distance_to_target(state.pose, state.target) <= delta:
        return Action.STOP
    theta = state.pose.theta
    if _dominant_heading(state) == theta and not forward_looks_blocked(profile, state.pose.radius):
        return Action.FORWARD
    bearing = target_bearing(state)
    right = _angle_diff((theta + 90) % 360, bearing)
    left = _angle_diff((theta - 90) % 360, bearing)
    return Action.TURN_LEFT if left < right else Action.TURN_RIGHT


class OraclePlanner:
    """A* over (x, y, heading) on the agent's 34 px lattice, replanned every call.

    Static move feasibility is exact and cached; entity discs at their current
    positions block any move whose swept disc would touch them.
    """

    def __init__(self, scene: SceneConfig, delta: float = SUCCESS_DELTA):
        self.scene = scene
        self.delta = delta
        self.lattice = StaticLattice(scene)
        self.last_plan: list[Action] | None = None

    def _entity_free(self, a, b, radius, discs) -> bool:
        return all(point_segment_distance(c, a, b) >= radius + r for c, r in discs)

    def plan(self, state: WorldState) -> list[Action] | None:
        """Shortest forward/turn sequence to a lattice point within delta of the target."""
        pose, target, delta = state.pose, state.target, self.delta
        radius = pose.radius
        discs = [(c, e.radius) for c, e in zip(entity_positions(self.scene, state.entity_phases), self.scene.entities)]

        def h(x, y):
            return max(0, math.ceil((math.dist((x, y), target) - delta) / STEP_PX))

        start = (pose.x, pose.y, pose.theta)
        counter = itertools.count()
        frontier = [(h(pose.x, pose.y), 0, next(counter), start)]
        parent: dict[tuple, tuple | None] = {start: None}
        cost = {start: 0}
        while frontier:
            _, g, _, node = heapq.heappop(frontier)
            if g > cost[node]:
                continue
            x, y, th = node
            if math.dist((x, y), target) <= delta:
                path = []
                while parent[node] is not None:
                    prev, act = parent[node]
                    path.append(act)
                    node = prev
                return path[::-1]
            moves = [((x, y, (th + 90) % 360), Action.TURN_RIGHT), ((x, y, (th - 90) % 360), Action.TURN_LEFT)]
            if self.lattice.can_move(x, y, th):
                dx, dy = HEADING_VECTORS[th]
                nxt = (x + dx * STEP_PX, y + dy * STEP_PX)
                if self._entity_free((x, y), nxt, radius, discs):
                    moves.append(((nxt[0], nxt[1], th), Action.FORWARD))
            for n, act in moves:
                ng = g + 1
                if ng < cost.get(n, math.inf):
                    cost[n] = ng
                    parent[n] = (node, act)
                    heapq.heappush(frontier, (ng + h(n[0], n[1]), ng, next(counter), n))
        return None

    def __call__(self, state: WorldState) -> Action:
        if distance_to_target(state.pose, state.target) <= self.delta:
            self.last_plan = []
            return Action.STOP
        self.last_plan = self.plan(state)
        if not self.last_plan:
            # an entity may be sealing the corridor for now
            return Action.TURN_RIGHT
        return self.last_plan[0]


_PLANNERS: dict[tuple[int, float], OraclePlanner] = {}


def oracle_policy(state: WorldState, scene: SceneConfig, delta: float = SUCCESS_DELTA) -> Action:
    key = (id(scene), delta)
    planner = _PLANNERS.get(key)
    if planner is None or planner.scene is not scene:
        planner = _PLANNERS[key] = OraclePlanner(scene, delta)
    return planner(state)


# -- policy objects used by the runner ------------------------------------------


class Policy:
    name = "policy"
    needs_images = False

    def decide(self, obs: Observation) -> tuple[AgentDecision, ModelReply | None]:
        raise NotImplementedError


def _scripted(action: Action, why: str) -> AgentDecision:
    return AgentDecision(why, action, json_reply(why, action), "json")


def json_reply(reasoning: str, action: Action) -> str:
    return '{"reasoning": "%s", "action": "%s"}' % (reasoning, action.value)


class GreedyPolicy(Policy):
    name = "greedy"

    def __init__(self, delta: float = SUCCESS_DELTA):
        self.delta = delta

    def decide(self, obs):
        return _scripted(greedy_policy(obs.state, obs.profile, self.delta), "greedy"), None


class OraclePolicy(Policy):
    name = "oracle"

    def __init__(self, scene: SceneConfig, delta: float = SUCCESS_DELTA):
        self.planner = OraclePlanner(scene, delta)

    def decide(self, obs):
        return _scripted(self.planner(obs.state), "oracle"), None


class ConstantPolicy(Policy):
    def __init__(self, action: Action):
        self.action = Action(action)
        self.name = self.action.value

    def decide(self, obs):
        return _scripted(self.action, "constant"), None


class RandomPolicy(Policy):
    """Uniform over forward and the two turns; stops once within delta."""

    name = "random"

    def __init__(self, seed: int, delta: float = SUCCESS_DELTA):
        self.rng = random.Random(seed)
        self.delta = delta

    def decide(self, obs):
        if distance_to_target(obs.state.pose, obs.state.target) <= self.delta:
            return _scripted(Action.STOP, "random"), None
        return _scripted(self.rng.choice(ALL_ACTIONS[:3]), "random"), None


class ModelPolicy(Policy):
    needs_images = True

    def __init__(
        self,
        client: ModelClient,
        default_action: Action = DEFAULT_ACTION,
        allowed: Sequence[Action] = ALL_ACTIONS,
    ):
        self.client = client
        self.default_action = default_action
        self.allowed = tuple(allowed)
        self.name = client.cfg.model_id

    def decide(self, obs):
        reply = self.client.query(obs.bundle)
        return parse_decision(reply.text, self.default_action, self.allowed), reply


SCRIPTED = ("greedy", "oracle", "random", "stop", "forward", "turn_left", "turn_right")


def make_policy(
    spec: str,
    scene: SceneConfig,
    *,
    seed: int = 0,
    delta: float = SUCCESS_DELTA,
    client: ModelClient | None = None,
) -> Policy:
    """Build a policy from its name: a scripted name or ``model:<model-id>``."""
    if spec == "greedy":
        return GreedyPolicy(delta)
    if spec == "oracle":
        return OraclePolicy(scene, delta)
    if spec == "random":
        return RandomPolicy(seed, delta)
    if spec in ("stop", "forward", "turn_left", "turn_right"):
        return ConstantPolicy(Action(spec))
    if spec.startswith("model:"):
        if client is None:
            raise ValueError(f"policy {spec!r} needs a model client")
        return ModelPolicy(client)
    raise ValueError(f"unknown policy {spec!r}; expected one of {SCRIPTED} or model:<id>")
