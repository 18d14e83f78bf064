"""Prompt construction, decision parsing and the chat-completion client."""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import httpx

from .dynamics import ALL_ACTIONS, Action, WorldState, distance_to_target
from .sensors import DEFAULT_FOV, EgoImage, TopDownImage, encode_png, render_ego, render_topdown
from .world import SUCCESS_DELTA, SceneConfig

log = logging.getLogger(__name__)

VARIANTS = ("odometry", "odometry+topdown", "no-history")
DEFAULT_HISTORY = 10


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    position: tuple[int, int]
    theta: int
    action: Action
    distance: float
    target: tuple[int, int]


def format_history_entry(e: HistoryEntry) -> str:
    return (
        f"Step {e.step}: Position ({e.position[0]}, {e.position[1]}), θ = {e.theta}°, "
        f"Action: {Action(e.action).label}, Distance to target: {round(e.distance)}, "
        f"Target ({e.target[0]}, {e.target[1]})"
    )


class HistoryWindow:
    """Fixed-capacity window of recent entries; the oldest is evicted first."""

    def __init__(self, capacity: int = DEFAULT_HISTORY, entries: Sequence[HistoryEntry] = ()):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self._entries: deque[HistoryEntry] = deque(maxlen=capacity)
        for e in entries:
            self.push(e)

    def push(self, entry: HistoryEntry) -> None:
        if self.capacity:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[HistoryEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def render(self) -> str:
        return "\n".join(format_history_entry(e) for e in self._entries)


# -- prompt templates -----------------------------------------------------------

_INTRO = """You are a warehouse navigation agent. At each step, you receive an egocentric camera view and a compact state description.
Your task is to reach the target while avoiding all obstacles."""

_VISUAL_INPUTS = """VISUAL INPUTS & MAPPING
- Egocentric Camera Image: Used to detect near-field obstacles and immediate collision risks.
- Top-Down Minimap Image: Provides the global layout. The robot is a RED TRIANGLE (tip is facing direction). The target is a GREEN DOT."""

_COORDINATES = """COORDINATE SYSTEM
- Map: +X = East (right), +Y = South (down), -X = West (left), -Y = North (up)
- Headings: θ = 0° → West, 90° → North, 180° → East, 270° → South"""

_STATE = """CURRENT STATE
- Position: ({curr_x}, {curr_y})
- Target: ({target_x}, {target_y})
- Distance to target: {distance} px
- Heading: {theta}°
- Allowed actions: {allowed_actions}"""

_DYNAMICS = """ACTIONS & DYNAMICS (Step size Δ = 34 px)
| Action     | Condition / Input    | Effect / Result          |
|------------|----------------------|--------------------------|
| turn_right | -                    | θ ← (θ + 90°) mod 360°   |
| turn_left  | -                    | θ ← (θ - 90°) mod 360°   |
| forward    | Heading 0° (West)    | x ← x - 34               |
| forward    | Heading 90° (North)  | y ← y - 34               |
| forward    | Heading 180° (East)  | x ← x + 34               |
| forward    | Heading 270° (South) | y ← y + 34               |
| stop       | {stop_cond} | Terminate episode        |"""

_MAPPING = """ACTION–STATE MAPPING
Turning (changes θ only, position unchanged)
  • turn_right: θ = (θ + 90) mod 360
  • turn_left: θ = (θ - 90) mod 360
Moving (changes position only, θ unchanged)
  • When θ = 0° (West): forward → (-34, 0)
  • When θ = 90° (North): forward → (0, -34)
  • When θ = 180° (East): forward → (+34, 0)
  • When θ = 270° (South): forward → (0, +34)"""

_PRIORITY = """DECISION PRIORITY
1. Check history. Review recent movements. Avoid repeating failed actions or getting stuck in loops.
2. Avoid obstacles first. Use the egocentric view. Never choose an action that collides with walls, shelves, robots, or other objects.
3. Reduce distance. Among safe actions, choose the one that moves closer to the target.
4. Make progress. If distance hasn't decreased in recent history, consider a different approach.
5. Stop. When within {delta} px of the target, choose stop."""

_OUTPUT = """OUTPUT (JSON only)
{{
  "reasoning": "Brief logic based on history and obstacles",
  "action": "<{action_choices}>" (SELECT ONE)
}}"""


@dataclass(frozen=True, eq=False)
class PromptBundle:
    text: str
    images: tuple = ()
    variant: str = "odometry"

    @property
    def digest(self) -> str:
        return hashlib.sha256(f"{self.variant}\n{self.text}".encode("utf-8")).hexdigest()


def _fmt_delta(delta: float) -> str:
    return str(int(delta)) if float(delta).is_integer() else f"{delta:g}"


def build_prompt_text(
    state: WorldState,
    history: HistoryWindow,
    variant: str = "odometry",
    allowed_actions: Sequence[Action] = ALL_ACTIONS,
    delta: float = SUCCESS_DELTA,
) -> str:
    if variant not in VARIANTS:
        raise ValueError(f"unknown prompt variant {variant!r}")
    p = state.pose
    d = _fmt_delta(delta)
    sections = [_INTRO]
    if variant == "odometry+topdown":
        sections.append(_VISUAL_INPUTS)
    sections.append(_COORDINATES)
    sections.append(
        _STATE.format(
            curr_x=p.x,
            curr_y=p.y,
            target_x=state.target[0],
            target_y=state.target[1],
            distance=round(distance_to_target(p, state.target)),
            theta=p.theta,
            allowed_actions=", ".join(Action(a).value for a in allowed_actions),
        )
    )
    if variant != "no-history":
        sections.append("MOVEMENT HISTORY\n" + (history.render() or "(no moves yet)"))
    sections += [
        _DYNAMICS.format(stop_cond=f"Dist ≤ {d} px".ljust(20)),
        _MAPPING,
        _PRIORITY.format(delta=d),
        _OUTPUT.format(action_choices="|".join(Action(a).value for a in allowed_actions)),
    ]
    return "\n\n".join(sections) + "\n"


def build_prompt(
    state: WorldState,
    scene: SceneConfig,
    history: HistoryWindow,
    variant: str = "odometry",
    allowed_actions: Sequence[Action] = ALL_ACTIONS,
    delta: float = SUCCESS_DELTA,
    render: bool = True,
    ego_size: tuple[int, int] = (1024, 1024),
    fov: float = DEFAULT_FOV,
) -> PromptBundle:
    """Text prompt plus images: the egocentric view, and the minimap for the top-down variant.

    ``render=False`` skips rasterization (scripted policies never look at pixels).
    """
    text = build_prompt_text(state, history, variant, allowed_actions, delta)
    images: tuple = ()
    if render:
        images = (render_ego(state, scene, ego_size[0], ego_size[1], fov),)
        if variant == "odometry+topdown":
            images += (render_topdown(state, scene),)
    return PromptBundle(text, images, variant)


# -- decisions --------------------------------------------------------------------

PARSE_STATUSES = ("json", "fallback", "failed")
DEFAULT_ACTION = Action.TURN_RIGHT

_KEYWORD = re.compile(r"turn[\s_-]*left|turn[\s_-]*right|forward|stop", re.IGNORECASE)


@dataclass(frozen=True)
class AgentDecision:
    reasoning: str
    action: Action
    raw: str
    parse_status: str


def _normalize_action(value: Any) -> Action | None:
    if not isinstance(value, str):
        return None
    key = re.sub(r"[\s\-]+", "_", value.strip().lower())
    try:
        return Action(key)
    except ValueError:
        return None


def parse_decision(
    raw: str, default_action: Action = DEFAULT_ACTION, allowed: Sequence[Action] = ALL_ACTIONS
) -> AgentDecision:
    """Strict JSON first (outermost braces), then the last action keyword in the text."""
    allowed = tuple(Action(a) for a in allowed)
    reasoning = ""
    lo, hi = raw.find("{"), raw.rfind("}")
    if lo != -1 and hi > lo:
        try:
            obj = json.loads(raw[lo : hi + 1])
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            reasoning = obj.get("reasoning", "") if isinstance(obj.get("reasoning"), str) else ""
            action = _normalize_action(obj.get("action"))
            if action in allowed:
                return AgentDecision(reasoning, action, raw, "json")
    for m in reversed(list(_KEYWORD.finditer(raw))):
        action = _normalize_action(m.group(0))
        if action in allowed:
            return AgentDecision(reasoning, action, raw, "fallback")
    return AgentDecision(reasoning, default_action, raw, "failed")


# -- model endpoint -------------------------------------------------------------


class ModelError(RuntimeError):
    pass


class AuthError(ModelError):
    pass


class RetriesExhausted(ModelError):
    pass


class MalformedResponse(ModelError):
    pass


@dataclass(frozen=True)
class ModelEndpointConfig:
    base_url: str = "https://openrouter.ai/api/v1"
    model_id: str = ""
    api_key_env: str = "OPENROUTER_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0
    backoff_s: float = 1.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")


@dataclass
class ModelReply:
    text: str
    request: dict  # body as sent, images replaced by digests
    response: Any
    latency_ms: float
    retries: int = 0


def _image_pixels(img) -> Any:
    return img.pixels if isinstance(img, (EgoImage, TopDownImage)) else img


def request_body(cfg: ModelEndpointConfig, bundle: PromptBundle, redact_images: bool = False) -> dict:
    content: list[dict] = [{"type": "text", "text": bundle.text}]
    for img in bundle.images:
        png = encode_png(_image_pixels(img))
        if redact_images:
            url = "sha256:" + hashlib.sha256(png).hexdigest()
        else:
            url = "data:image/png;base64," + base64.b64encode(png).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": url}})
    return {
        "model": cfg.model_id,
        "temperature": cfg.temperature,
        "messages": [{"role": "user", "content": content}],
    }


def _reply_text(payload: Any) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedResponse(f"no choices[0].message.content in response: {str(payload)[:200]}") from None
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if not isinstance(content, str):
        raise MalformedResponse("message content is not text")
    return content


class ModelClient:
    """Chat-completion client with retries and a shared in-flight cap.

    One instance may be shared by concurrently running episodes.
    """

    def __init__(
        self,
        cfg: ModelEndpointConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(max(1, cfg.max_in_flight))
        self._http = httpx.Client(timeout=cfg.timeout_s, transport=transport)

    def close(self) -> None:
        self._http.close()

    def query(self, bundle: PromptBundle) -> ModelReply:
        cfg = self.cfg
        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise AuthError(f"environment variable {cfg.api_key_env} is not set")
        body = request_body(cfg, bundle)
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        last = "no attempt made"
        start = time.perf_counter()
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self._sleep(cfg.backoff_s * 2 ** (attempt - 1))
            try:
                with self._gate:
                    resp = self._http.post(url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = f"timeout: {exc}"
                log.warning("model request timed out (attempt %d)", attempt + 1)
                continue
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
                log.warning("model request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code in (401, 403):
                log.error("endpoint rejected credentials: HTTP %d", resp.status_code)
                raise AuthError(f"HTTP {resp.status_code} from {url}")
            if resp.status_code >= 500 or resp.status_code == 429:
                last = f"HTTP {resp.status_code}"
                log.warning("model endpoint returned HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise MalformedResponse(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError:
                raise MalformedResponse(f"response is not JSON: {resp.text[:200]}") from None
            text = _reply_text(payload)
            return ModelReply(
                text=text,
                request=request_body(cfg, bundle, redact_images=True),
                response=payload,
                latency_ms=(time.perf_counter() - start) * 1000.0,
                retries=attempt,
            )
        log.error("giving up after %d attempts: %s", cfg.max_retries + 1, last)
        raise RetriesExhausted(f"{cfg.max_retries + 1} attempts failed; last error: {last}")


def query_model(cfg: ModelEndpointConfig, bundle: PromptBundle, **client_kwargs) -> str:
    client = ModelClient(cfg, **client_kwargs)
    try:
        return client.query(bundle).text
    finally:
        client.close()
