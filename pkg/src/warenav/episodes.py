"""Episode loop (sense, prompt, decide, step, record), JSONL logs, replay and benchmark runs."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .dynamics import Action, AgentPose, WorldState, distance_to_target, initial_state, step_world
from .metrics import BenchReport, RunRecord, aggregate_report
from .policies import Observation, Policy, make_policy
from .protocol import (
    VARIANTS,
    HistoryEntry,
    HistoryWindow,
    ModelClient,
    ModelEndpointConfig,
    ModelError,
    build_prompt,
)
from .sensors import WarningConfig, cast_depth, detect_warning, render_ego, render_topdown, write_ppm
from .world import SUCCESS_DELTA, SceneConfig, scene_digest

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class LogError(ValueError):
    pass


class TruncatedLogError(LogError):
    def __init__(self, path, last_valid_step: int | None):
        self.last_valid_step = last_valid_step
        super().__init__(f"{path}: truncated or corrupt line after step {last_valid_step}")


class ReplayDivergence(RuntimeError):
    def __init__(self, step: int, what: str):
        self.step = step
        self.what = what
        super().__init__(f"replay diverged at step {step}: {what}")


@dataclass(frozen=True)
class EpisodeConfig:
    scene: SceneConfig
    pair_index: int = 0
    max_steps: int = 70
    delta: float = SUCCESS_DELTA
    history_len: int = 10
    variant: str = "odometry"
    policy: str = "greedy"
    seed: int = 0
    fov: float = 90.0
    depth_rays: int = 91
    warning: WarningConfig = field(default_factory=WarningConfig)
    ego_size: tuple[int, int] = (1024, 1024)

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 <= self.pair_index < len(self.scene.pairs):
            raise ValueError(f"pair_index {self.pair_index} out of range for {len(self.scene.pairs)} pairs")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def episode_id(self) -> str:
        return f"{self.scene.name}_p{self.pair_index}"

    def header_fields(self) -> dict[str, Any]:
        return {
            "scene": self.scene.name,
            "scene_digest": scene_digest(self.scene),
            "pair_index": self.pair_index,
            "max_steps": self.max_steps,
            "delta": self.delta,
            "history_len": self.history_len,
            "variant": self.variant,
            "policy": self.policy,
            "seed": self.seed,
            "fov": self.fov,
            "depth_rays": self.depth_rays,
            "warning": asdict(self.warning),
        }

    @property
    def digest(self) -> str:
        blob = json.dumps(self.header_fields(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class StepRecord:
    step: int
    pose_before: tuple[int, int, int]
    action: str
    pose_after: tuple[int, int, int]
    distance_after: float
    collided: bool
    warning: bool
    parse_status: str
    prompt_hash: str
    raw_response: str
    latency_ms: float = 0.0
    entity_contact: bool = False
    reasoning: str = ""
    request: Any = None
    response: Any = None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["pose_before"] = list(self.pose_before)
        d["pose_after"] = list(self.pose_after)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepRecord":
        d = dict(d)
        d["pose_before"] = tuple(d["pose_before"])
        d["pose_after"] = tuple(d["pose_after"])
        return cls(**d)


@dataclass
class EpisodeLog:
    header: dict[str, Any]
    records: list[StepRecord]


@dataclass
class EpisodeResult:
    run: RunRecord | None
    log_path: Path | None
    success: bool
    aborted: bool = False
    error: str | None = None
    records: list[StepRecord] = field(default_factory=list, repr=False)


def _pose_tuple(p: AgentPose) -> tuple[int, int, int]:
    return (p.x, p.y, p.theta)


# -- JSONL logs ---------------------------------------------------------------


def write_log(path, header: dict[str, Any], records: Iterable[StepRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"type": "header", "schema_version": SCHEMA_VERSION, **header}
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(head, sort_keys=True, ensure_ascii=False) + "\n")
        for r in records:
            fh.write(json.dumps({"type": "step", **r.to_dict()}, sort_keys=True, ensure_ascii=False) + "\n")
    return path


def read_log(path) -> EpisodeLog:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LogError(f"{path}: empty log")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise TruncatedLogError(path, None) from None
    if header.get("type") != "header":
        raise LogError(f"{path}: first line is not a header")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise LogError(f"{path}: schema version {header.get('schema_version')} != {SCHEMA_VERSION}")
    header = {k: v for k, v in header.items() if k not in ("type", "schema_version")}
    records: list[StepRecord] = []
    for line in lines[1:]:
        try:
            d = json.loads(line)
            d.pop("type")
            rec = StepRecord.from_dict(d)
        except (json.JSONDecodeError, KeyError, TypeError):
            raise TruncatedLogError(path, records[-1].step if records else None) from None
        if rec.step != len(records):
            raise LogError(f"{path}: step {rec.step} out of sequence")
        records.append(rec)
    return EpisodeLog(header, records)


def run_record_from_log(log_: EpisodeLog) -> RunRecord:
    """Counters read straight from the logged steps (no re-simulation)."""
    recs = log_.records
    h = log_.header
    return RunRecord(
        scene=h["scene"],
        pair_index=h["pair_index"],
        T=len(recs),
        d_final=recs[-1].distance_after if recs else h["D_init"],
        D_init=h["D_init"],
        C=sum(r.collided for r in recs),
        F=sum(r.action == Action.FORWARD.value for r in recs),
        W=sum(r.warning for r in recs),
        terminated_by="stop_action" if recs and recs[-1].action == Action.STOP.value else "step_cap",
    )


# -- one episode --------------------------------------------------------------


def _warning_for(state: WorldState, cfg: EpisodeConfig, scene: SceneConfig):
    profile = cast_depth(state, scene, fov=cfg.fov, n_rays=cfg.depth_rays)
    return profile, detect_warning(profile, cfg.warning, scene.map.meters_per_pixel)


def run_episode(
    cfg: EpisodeConfig,
    log_dir=None,
    policy: Policy | None = None,
    client: ModelClient | None = None,
    frames_dir=None,
) -> EpisodeResult:
    scene = cfg.scene
    if policy is None:
        policy = make_policy(cfg.policy, scene, seed=cfg.seed, delta=cfg.delta, client=client)
    state = initial_state(scene, cfg.pair_index)
    d_init = distance_to_target(state.pose, state.target)
    history = HistoryWindow(cfg.history_len)
    profile, warning = _warning_for(state, cfg, scene)
    records: list[StepRecord] = []
    counters = {"C": 0, "F": 0, "W": 0}
    terminated_by = "step_cap"
    error = None
    frames = Path(frames_dir) if frames_dir is not None else None
    if frames is not None:
        frames.mkdir(parents=True, exist_ok=True)

    for t in range(cfg.max_steps):
        bundle = build_prompt(
            state, scene, history, cfg.variant, delta=cfg.delta,
            render=policy.needs_images, ego_size=cfg.ego_size, fov=cfg.fov,
        )
        if frames is not None:
            ego = bundle.images[0] if bundle.images else render_ego(state, scene, *cfg.ego_size, cfg.fov)
            write_ppm(frames / f"{cfg.episode_id}_{t}_ego.ppm", ego.pixels)
            write_ppm(frames / f"{cfg.episode_id}_{t}_top.ppm", render_topdown(state, scene).pixels)
        try:
            decision, reply = policy.decide(Observation(state, scene, profile, bundle))
        except ModelError as exc:
            error = f"{type(exc).__name__}: {exc}"
            log.error("episode %s aborted at step %d: %s", cfg.episode_id, t, error)
            break
        action = decision.action
        before = state.pose
        collided = contact = False
        if action is Action.STOP:
            terminated_by = "stop_action"
        else:
            outcome = step_world(state, action, scene)
            collided, contact = outcome.collided, outcome.entity_contact
            counters["F"] += outcome.attempted_forward
            counters["C"] += outcome.collided
            state = outcome.state
            profile, warning = _warning_for(state, cfg, scene)
        counters["W"] += warning
        records.append(
            StepRecord(
                step=t,
                pose_before=_pose_tuple(before),
                action=action.value,
                pose_after=_pose_tuple(state.pose),
                distance_after=distance_to_target(state.pose, state.target),
                collided=collided,
                warning=warning,
                parse_status=decision.parse_status,
                prompt_hash=bundle.digest,
                raw_response=decision.raw,
                latency_ms=reply.latency_ms if reply else 0.0,
                entity_contact=contact,
                reasoning=decision.reasoning,
                request=reply.request if reply else None,
                response=reply.response if reply else None,
            )
        )
        history.push(HistoryEntry(t, before.position, before.theta, action, distance_to_target(before, state.target), state.target))
        if action is Action.STOP:
            break

    aborted = error is not None
    run = None
    if not aborted:
        run = RunRecord(
            scene=scene.name,
            pair_index=cfg.pair_index,
            T=len(records),
            d_final=distance_to_target(state.pose, state.target),
            D_init=d_init,
            terminated_by=terminated_by,
            **counters,
        )
    header = {
        **cfg.header_fields(),
        "config_digest": cfg.digest,
        "D_init": d_init,
        "status": "aborted" if aborted else "complete",
        "error": error,
        "run": run.to_dict() if run else None,
    }
    log_path = write_log(Path(log_dir) / f"{cfg.episode_id}.jsonl", header, records) if log_dir is not None else None
    return EpisodeResult(
        run=run,
        log_path=log_path,
        success=bool(run and run.d_final <= cfg.delta),
        aborted=aborted,
        error=error,
        records=records,
    )


# -- replay -------------------------------------------------------------------


def replay(log_: EpisodeLog, scene: SceneConfig) -> RunRecord:
    """Re-execute the logged actions and rebuild the run counters; raise on any mismatch."""
    h = log_.header
    if h.get("scene_digest") != scene_digest(scene):
        raise LogError("log was recorded on a different scene (digest mismatch)")
    cfg = EpisodeConfig(
        scene=scene,
        pair_index=h["pair_index"],
        max_steps=h["max_steps"],
        delta=h["delta"],
        fov=h["fov"],
        depth_rays=h["depth_rays"],
        warning=WarningConfig(**h["warning"]),
    )
    state = initial_state(scene, cfg.pair_index)
    d_init = distance_to_target(state.pose, state.target)
    _, warning = _warning_for(state, cfg, scene)
    C = F = W = 0
    terminated_by = "step_cap"
    for i, rec in enumerate(log_.records):
        if rec.step != i:
            raise ReplayDivergence(i, "step index out of sequence")
        if tuple(rec.pose_before) != _pose_tuple(state.pose):
            raise ReplayDivergence(i, f"pose_before {rec.pose_before} != {_pose_tuple(state.pose)}")
        action = Action(rec.action)
        collided = False
        if action is Action.STOP:
            terminated_by = "stop_action"
        else:
            out = step_world(state, action, scene)
            collided = out.collided
            F += out.attempted_forward
            C += out.collided
            state = out.state
            _, warning = _warning_for(state, cfg, scene)
        W += warning
        if tuple(rec.pose_after) != _pose_tuple(state.pose):
            raise ReplayDivergence(i, f"pose_after {rec.pose_after} != {_pose_tuple(state.pose)}")
        if rec.collided != collided:
            raise ReplayDivergence(i, f"collided {rec.collided} != {collided}")
        if rec.warning != warning:
            raise ReplayDivergence(i, f"warning {rec.warning} != {warning}")
        if rec.distance_after != distance_to_target(state.pose, state.target):
            raise ReplayDivergence(i, "distance_after mismatch")
        if action is Action.STOP and i != len(log_.records) - 1:
            raise ReplayDivergence(i, "steps recorded after stop")
    return RunRecord(
        scene=scene.name,
        pair_index=cfg.pair_index,
        T=len(log_.records),
        d_final=distance_to_target(state.pose, state.target),
        D_init=d_init,
        C=C,
        F=F,
        W=W,
        terminated_by=terminated_by,
    )


def replay_poses(log_: EpisodeLog, scene: SceneConfig) -> list[AgentPose]:
    """Agent pose after every logged step, re-simulated (start pose first)."""
    state = initial_state(scene, log_.header["pair_index"])
    poses = [state.pose]
    for rec in log_.records:
        if rec.action != Action.STOP.value:
            state = step_world(state, Action(rec.action), scene).state
        poses.append(state.pose)
    return poses


# -- benchmark matrix ------------------------------------------------------------


def policy_label(spec: str) -> str:
    return spec.split(":", 1)[1] if spec.startswith("model:") else spec


@dataclass
class BenchResult:
    report: BenchReport
    results: dict[tuple[str, str, int], EpisodeResult]

    @property
    def aborted(self) -> list[tuple[str, str, int]]:
        return [k for k, r in self.results.items() if r.aborted]


def run_bench(
    scenes: Sequence[SceneConfig],
    policies: Sequence[str],
    *,
    parallelism: int = 1,
    out_dir=None,
    pairs: Sequence[int] | None = None,
    endpoint: ModelEndpointConfig | None = None,
    client_factory: Callable[[ModelEndpointConfig], ModelClient] = ModelClient,
    **episode_kwargs,
) -> BenchResult:
    """Run every (policy, scene, pair) cell as an independent episode."""
    clients: dict[str, ModelClient] = {}
    for spec in policies:
        if spec.startswith("model:"):
            base = endpoint or ModelEndpointConfig()
            clients[spec] = client_factory(replace(base, model_id=policy_label(spec)))

    cells = [
        (spec, scene, p)
        for spec in policies
        for scene in scenes
        for p in (pairs if pairs is not None else range(len(scene.pairs)))
    ]
    delta = episode_kwargs.get("delta", SUCCESS_DELTA)

    def run_cell(cell):
        spec, scene, p = cell
        cfg = EpisodeConfig(scene=scene, pair_index=p, policy=spec, **episode_kwargs)
        log_dir = Path(out_dir) / "logs" / policy_label(spec).replace("/", "_") if out_dir is not None else None
        try:
            return run_episode(cfg, log_dir=log_dir, client=clients.get(spec))
        except Exception as exc:  # one broken cell must not poison the rest
            log.exception("cell %s/%s/%d failed", spec, scene.name, p)
            return EpisodeResult(None, None, False, aborted=True, error=f"{type(exc).__name__}: {exc}")

    try:
        if parallelism <= 1:
            outcomes = [run_cell(c) for c in cells]
        else:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                outcomes = list(pool.map(run_cell, cells))
    finally:
        for c in clients.values():
            c.close()

    results = {(spec, scene.name, p): r for (spec, scene, p), r in zip(cells, outcomes)}
    runs: dict[str, list[RunRecord]] = {}
    expected: dict[str, int] = {}
    for (spec, _, _), r in zip(cells, outcomes):
        label = policy_label(spec)
        expected[label] = expected.get(label, 0) + 1
        runs.setdefault(label, [])
        if r.run is not None:
            runs[label].append(r.run)
    complete = all(r.run is not None for r in outcomes)
    scored = {m: rs for m, rs in runs.items() if rs}
    report = aggregate_report(scored, delta, expected=expected, strict=complete)
    return BenchResult(report, results)
