"""Discrete PointGoal navigation harness for warehouse scenes."""

from .dynamics import Action, AgentPose, WorldState, step_world
from .metrics import RunRecord, aggregate_report
from .world import SceneConfig, generate_scene, load_scene, validate_scene

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AgentPose",
    "RunRecord",
    "SceneConfig",
    "WorldState",
    "aggregate_report",
    "generate_scene",
    "load_scene",
    "step_world",
    "validate_scene",
]
