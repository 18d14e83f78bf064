import json
from dataclasses import replace

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box_scene, generated
from warenav.dynamics import Action, AgentPose, WorldState, initial_state, step_world
from warenav.episodes import (
    EpisodeConfig,
    EpisodeLog,
    LogError,
    ReplayDivergence,
    TruncatedLogError,
    read_log,
    replay,
    run_bench,
    run_episode,
    run_record_from_log,
    write_log,
)
from warenav.policies import ConstantPolicy, OraclePlanner, greedy_policy, make_policy
from warenav.protocol import ModelClient, ModelEndpointConfig
from warenav.world import StartTargetPair


def test_oracle_reaches_target_and_stops(tmp_path, box):
    res = run_episode(EpisodeConfig(box, 0, policy="oracle"), log_dir=tmp_path)
    assert res.success and res.run.terminated_by == "stop_action"
    assert res.records[-1].action == "stop"
    assert res.run.T == len(res.records)
    assert res.log_path.exists()


def test_step_cap_terminates(box):
    res = run_episode(EpisodeConfig(box, 0, policy="turn_left", max_steps=7))
    assert res.run.T == 7 and res.run.terminated_by == "step_cap" and not res.success


def test_stop_outside_delta_ends_run(box):
    res = run_episode(EpisodeConfig(box, 0, policy="stop"))
    assert res.run.T == 1 and not res.success
    assert res.run.d_final == res.run.D_init


def test_history_records_pre_action_pose(box):
    res = run_episode(EpisodeConfig(box, 0, policy="forward", max_steps=3))
    assert res.records[1].pose_before == res.records[0].pose_after


def test_collisions_are_counted_and_replayed(tmp_path, box):
    # facing East from (102, 51) the crate blocks every forward
    scene = replace(box, pairs=(StartTargetPair((102, 51), 180, (255, 51)),))
    res = run_episode(EpisodeConfig(scene, 0, policy="forward", max_steps=5), log_dir=tmp_path)
    assert res.run.C == res.run.F == 5
    assert all(r.pose_after == r.pose_before for r in res.records)
    log_ = read_log(res.log_path)
    assert replay(log_, scene).C == 5
    assert run_record_from_log(log_) == res.run


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 4), st.integers(0, 3), st.sampled_from(["greedy", "random", "oracle"]))
def test_log_replays_to_same_record(seed, pair, policy):
    scene = generated(seed)
    res = run_episode(EpisodeConfig(scene, pair, policy=policy, max_steps=25, seed=seed))
    log_ = EpisodeLog({**EpisodeConfig(scene, pair, policy=policy, max_steps=25).header_fields()}, res.records)
    assert replay(log_, scene) == res.run


def test_tampered_log_diverges(tmp_path, box):
    res = run_episode(EpisodeConfig(box, 0, policy="oracle"), log_dir=tmp_path)
    log_ = read_log(res.log_path)
    forward = next(i for i, r in enumerate(log_.records) if r.action == "forward")
    log_.records[forward] = replace(log_.records[forward], action="turn_left")
    with pytest.raises(ReplayDivergence) as err:
        replay(log_, box)
    assert err.value.step == forward


def test_replay_rejects_other_scene(tmp_path, box):
    res = run_episode(EpisodeConfig(box, 0), log_dir=tmp_path)
    with pytest.raises(LogError, match="digest"):
        replay(read_log(res.log_path), generated(0))


def test_truncated_log_names_last_good_step(tmp_path, box):
    res = run_episode(EpisodeConfig(box, 0, policy="oracle"), log_dir=tmp_path)
    text = res.log_path.read_text()
    cut = tmp_path / "cut.jsonl"
    cut.write_text(text[: text.rindex("\n", 0, len(text) - 1) + 20])
    with pytest.raises(TruncatedLogError) as err:
        read_log(cut)
    assert err.value.last_valid_step == len(res.records) - 2


def test_log_roundtrip(tmp_path, box):
    res = run_episode(EpisodeConfig(box, 1, policy="greedy"))
    path = write_log(tmp_path / "x.jsonl", {"scene": "box"}, res.records)
    assert read_log(path).records == res.records
    first = json.loads(path.read_text().splitlines()[0])
    assert first["type"] == "header"


def test_entity_contact_is_not_a_collision():
    scene = box_scene()
    bot = scene.entities[0]
    # agent parked on the robot's loop; the robot drives into it
    scene = replace(scene, pairs=(StartTargetPair((80, 195), 270, (255, 51)),))
    state = initial_state(scene, 0)
    contacts = collisions = 0
    for _ in range(20):
        out = step_world(state, Action.TURN_LEFT, scene)
        contacts += out.entity_contact
        collisions += out.collided
        state = out.state
    assert bot.speed > 0 and contacts > 0 and collisions == 0


# -- policies -------------------------------------------------------------------


def test_greedy_turns_toward_target():
    s = WorldState(AgentPose(100, 100, 0), (), 0, (300, 100))
    assert greedy_policy(s) in (Action.TURN_LEFT, Action.TURN_RIGHT)
    s = WorldState(AgentPose(100, 100, 180), (), 0, (300, 100))
    assert greedy_policy(s) is Action.FORWARD
    s = WorldState(AgentPose(100, 100, 270), (), 0, (100, 110))
    assert greedy_policy(s) is Action.STOP
    # target due East while facing North: one right turn
    assert greedy_policy(WorldState(AgentPose(100, 100, 90), (), 0, (300, 100))) is Action.TURN_RIGHT
    assert greedy_policy(WorldState(AgentPose(100, 100, 90), (), 0, (115, 100))) is Action.STOP


@given(st.integers(0, 600), st.integers(0, 600), st.sampled_from((0, 90, 180, 270)), st.integers(0, 600), st.integers(0, 600))
def test_greedy_stops_iff_within_delta(x, y, theta, tx, ty):
    s = WorldState(AgentPose(x, y, theta), (), 0, (tx, ty))
    assert (greedy_policy(s) is Action.STOP) == (((tx - x) ** 2 + (ty - y) ** 2) ** 0.5 <= 20)


def test_oracle_plan_is_shortest(box):
    planner = OraclePlanner(box.static())
    plan = planner.plan(initial_state(box.static(), 1))
    # (51,119) facing South to within 20 px of (51,51): turn twice, forward twice
    assert len(plan) == 4 and plan.count(Action.FORWARD) == 2


def test_unknown_policy(box):
    with pytest.raises(ValueError):
        make_policy("teleport", box)
    with pytest.raises(ValueError):
        make_policy("model:x", box)


# -- model-backed episodes ---------------------------------------------------------


def _model_client(monkeypatch, handler):
    monkeypatch.setenv("TEST_KEY", "sk-secret")
    cfg = ModelEndpointConfig(base_url="http://m.test/v1", model_id="mock/m", api_key_env="TEST_KEY", max_retries=1)
    return ModelClient(cfg, transport=httpx.MockTransport(handler), sleep=lambda s: None)


def test_model_episode_logs_request_without_secrets(tmp_path, monkeypatch, box):
    answers = iter(['{"reasoning": "go", "action": "turn_left"}', "hmm forward"])

    def handler(req):
        text = next(answers, '{"action": "stop"}')
        return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})

    client = _model_client(monkeypatch, handler)
    cfg = EpisodeConfig(box, 0, policy="model:mock/m", ego_size=(16, 16))
    res = run_episode(cfg, log_dir=tmp_path, client=client)
    assert [r.parse_status for r in res.records] == ["json", "fallback", "json"]
    text = res.log_path.read_text()
    assert "sk-secret" not in text and "base64" not in text and "sha256:" in text


def test_model_failure_aborts_episode(tmp_path, monkeypatch, box):
    client = _model_client(monkeypatch, lambda req: httpx.Response(500))
    res = run_episode(EpisodeConfig(box, 0, policy="model:mock/m", ego_size=(8, 8)), log_dir=tmp_path, client=client)
    assert res.aborted and res.run is None and "RetriesExhausted" in res.error
    assert read_log(res.log_path).header["status"] == "aborted"


def test_bench_excludes_aborted_cells(tmp_path, monkeypatch, box):
    monkeypatch.setenv("TEST_KEY", "k")

    def factory(cfg):
        return ModelClient(replace(cfg, api_key_env="TEST_KEY", max_retries=0), transport=httpx.MockTransport(lambda r: httpx.Response(500)))

    result = run_bench([box], ["greedy", "model:bad"], out_dir=tmp_path, client_factory=factory, ego_size=(8, 8))
    assert len(result.aborted) == 2
    assert [r.model for r in result.report.rows] == ["greedy"]


def test_custom_policy_object(box):
    res = run_episode(EpisodeConfig(box, 0, max_steps=4), policy=ConstantPolicy(Action.TURN_RIGHT))
    assert [r.pose_after[2] for r in res.records] == [270, 0, 90, 180]


def test_bench_csv_independent_of_parallelism(box):
    a = run_bench([box, generated(0)], ["greedy", "oracle"], parallelism=1).report.to_csv()
    b = run_bench([box, generated(0)], ["greedy", "oracle"], parallelism=4).report.to_csv()
    assert a == b
