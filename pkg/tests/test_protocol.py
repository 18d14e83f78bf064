import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import generated
from warenav.dynamics import Action, AgentPose, WorldState, initial_state
from warenav.protocol import (
    AuthError,
    HistoryEntry,
    HistoryWindow,
    MalformedResponse,
    ModelClient,
    ModelEndpointConfig,
    PromptBundle,
    RetriesExhausted,
    build_prompt,
    build_prompt_text,
    format_history_entry,
    parse_decision,
    request_body,
)

GOLDEN = Path(__file__).parent / "golden"
CYCLE = (Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


def golden_inputs():
    state = WorldState(AgentPose(100, 200, 90), (), 0, (130, 200))
    window = HistoryWindow(10)
    for i in range(12):
        window.push(HistoryEntry(i, (100 - i, 200), 90, CYCLE[i % 3], 30 + i, (130, 200)))
    return state, window


# -- history and prompt text ----------------------------------------------------


def test_history_entry_format():
    e = HistoryEntry(7, (100, 200), 90, Action.TURN_LEFT, 30, (130, 200))
    assert format_history_entry(e) == (
        "Step 7: Position (100, 200), θ = 90°, Action: turn left, Distance to target: 30, Target (130, 200)"
    )


@given(st.integers(0, 15), st.integers(0, 40))
def test_window_keeps_latest(capacity, pushes):
    w = HistoryWindow(capacity)
    for i in range(pushes):
        w.push(HistoryEntry(i, (0, 0), 0, Action.FORWARD, 1, (5, 5)))
    assert len(w) == min(capacity, pushes)
    assert [e.step for e in w.entries] == list(range(pushes - len(w), pushes))


def test_default_prompt_matches_golden():
    state, window = golden_inputs()
    text = build_prompt_text(state, window)
    assert text == (GOLDEN / "prompt_odometry.txt").read_text(encoding="utf-8")


@given(st.integers(0, 1000), st.integers(0, 1000), st.sampled_from((0, 90, 180, 270)), st.sampled_from(["odometry", "no-history", "odometry+topdown"]))
def test_prompt_text_is_pure(x, y, theta, variant):
    state, window = golden_inputs()
    state = WorldState(AgentPose(x, y, theta), (), 0, state.target)
    assert build_prompt_text(state, window, variant) == build_prompt_text(state, window, variant)
    assert f"- Position: ({x}, {y})" in build_prompt_text(state, window, variant)


def test_no_history_variant_drops_block():
    state, window = golden_inputs()
    text = build_prompt_text(state, window, "no-history")
    assert "MOVEMENT HISTORY" not in text and "Step 11:" not in text
    assert "θ = 0° → West, 90° → North, 180° → East, 270° → South" in text


def test_topdown_variant_adds_minimap():
    scene = generated(0)
    state = initial_state(scene, 0)
    bundle = build_prompt(state, scene, HistoryWindow(), "odometry+topdown", ego_size=(32, 32))
    assert "Top-Down Minimap Image" in bundle.text
    assert len(bundle.images) == 2
    plain = build_prompt(state, scene, HistoryWindow(), ego_size=(32, 32))
    assert len(plain.images) == 1 and "Minimap" not in plain.text
    assert "(no moves yet)" in plain.text
    assert plain.digest != bundle.digest


def test_delta_is_templated():
    state, window = golden_inputs()
    text = build_prompt_text(state, window, delta=12.5)
    assert "When within 12.5 px of the target" in text and "Dist ≤ 12.5 px" in text


# -- parsing --------------------------------------------------------------------


@pytest.mark.parametrize(
    "raw, action, status",
    [
        ('{"reasoning": "clear", "action": "forward"}', Action.FORWARD, "json"),
        ('Sure!\n```json\n{"reasoning": "x", "action": "turn_left"}\n```', Action.TURN_LEFT, "json"),
        ('{"reasoning": "x", "action": "Turn Right"}', Action.TURN_RIGHT, "json"),
        ("I would go forward, no wait, turn left", Action.TURN_LEFT, "fallback"),
        ('{"action": "fly"} then stop', Action.STOP, "fallback"),
        ("no idea", Action.TURN_RIGHT, "failed"),
        ("", Action.TURN_RIGHT, "failed"),
    ],
)
def test_parse_decision(raw, action, status):
    d = parse_decision(raw)
    assert (d.action, d.parse_status) == (action, status)
    assert d.raw == raw


@given(st.text(max_size=200))
def test_parse_never_raises(raw):
    d = parse_decision(raw)
    assert d.action in tuple(Action)
    assert d.parse_status in ("json", "fallback", "failed")


@given(st.sampled_from(list(Action)), st.text(max_size=50))
def test_json_roundtrip(action, reasoning):
    d = parse_decision(json.dumps({"reasoning": reasoning, "action": action.value}))
    assert d.parse_status == "json" and d.action is action and d.reasoning == reasoning


def test_disallowed_action_falls_through():
    d = parse_decision('{"action": "stop"}', allowed=(Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT))
    assert d.parse_status == "failed" and d.action is Action.TURN_RIGHT


# -- client ---------------------------------------------------------------------


def _ok(text="{\"action\": \"forward\"}"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


def _client(handler, monkeypatch, **cfg):
    monkeypatch.setenv("TEST_KEY", "sk-test")
    sleeps = []
    conf = ModelEndpointConfig(base_url="http://model.test/v1", model_id="m", api_key_env="TEST_KEY", **cfg)
    return ModelClient(conf, transport=httpx.MockTransport(handler), sleep=sleeps.append), sleeps


def _bundle():
    return PromptBundle("hello", ())


def test_client_sends_bearer_and_body(monkeypatch):
    seen = {}

    def handler(req):
        seen["auth"] = req.headers["authorization"]
        seen["url"] = str(req.url)
        seen["body"] = json.loads(req.content)
        return _ok()

    client, _ = _client(handler, monkeypatch)
    reply = client.query(_bundle())
    assert reply.text == '{"action": "forward"}'
    assert seen["auth"] == "Bearer sk-test"
    assert seen["url"] == "http://model.test/v1/chat/completions"
    assert seen["body"]["model"] == "m" and seen["body"]["temperature"] == 0
    assert "sk-test" not in json.dumps(reply.request)


def test_images_are_base64_png_and_redacted_in_logs():
    scene = generated(0)
    bundle = build_prompt(initial_state(scene, 0), scene, HistoryWindow(), ego_size=(16, 16))
    cfg = ModelEndpointConfig(model_id="m")
    sent = request_body(cfg, bundle)["messages"][0]["content"][1]["image_url"]["url"]
    logged = request_body(cfg, bundle, redact_images=True)["messages"][0]["content"][1]["image_url"]["url"]
    assert sent.startswith("data:image/png;base64,")
    assert logged.startswith("sha256:") and len(logged) == 7 + 64


def test_retries_with_backoff_then_succeeds(monkeypatch):
    codes = iter([503, 429])

    def handler(req):
        code = next(codes, 200)
        return _ok() if code == 200 else httpx.Response(code)

    client, sleeps = _client(handler, monkeypatch, backoff_s=0.5)
    reply = client.query(_bundle())
    assert reply.retries == 2
    assert sleeps == [0.5, 1.0]


def test_timeouts_exhaust_retries(monkeypatch):
    def handler(req):
        raise httpx.ReadTimeout("slow", request=req)

    client, sleeps = _client(handler, monkeypatch, max_retries=2)
    with pytest.raises(RetriesExhausted):
        client.query(_bundle())
    assert len(sleeps) == 2


@pytest.mark.parametrize("code", [401, 403])
def test_auth_failure_is_not_retried(monkeypatch, code):
    calls = []

    def handler(req):
        calls.append(1)
        return httpx.Response(code)

    client, _ = _client(handler, monkeypatch)
    with pytest.raises(AuthError):
        client.query(_bundle())
    assert len(calls) == 1


def test_missing_key_fails_before_network(monkeypatch):
    monkeypatch.delenv("NOPE_KEY", raising=False)

    def handler(req):
        raise AssertionError("should not be called")

    client = ModelClient(ModelEndpointConfig(model_id="m", api_key_env="NOPE_KEY"), transport=httpx.MockTransport(handler))
    with pytest.raises(AuthError, match="NOPE_KEY"):
        client.query(_bundle())


def test_malformed_payload(monkeypatch):
    client, _ = _client(lambda req: httpx.Response(200, json={"oops": 1}), monkeypatch)
    with pytest.raises(MalformedResponse):
        client.query(_bundle())


class _Stub(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        text = json.dumps({"reasoning": "stub", "action": "turn_left" if "hello" in body["messages"][0]["content"][0]["text"] else "stop"})
        out = json.dumps({"choices": [{"message": {"role": "assistant", "content": text}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


def test_against_local_http_server(monkeypatch):
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Stub)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        monkeypatch.setenv("STUB_KEY", "k")
        cfg = ModelEndpointConfig(base_url=f"http://127.0.0.1:{server.server_port}/v1", model_id="stub", api_key_env="STUB_KEY")
        client = ModelClient(cfg)
        d = parse_decision(client.query(_bundle()).text)
        client.close()
        assert d.action is Action.TURN_LEFT and d.parse_status == "json"
    finally:
        server.shutdown()
