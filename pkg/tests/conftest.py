import math

import pytest

from warenav.world import (
    DynamicEntity,
    MapSpec,
    Obstacle,
    SceneConfig,
    StartTargetPair,
    generate_scene,
)

ACCEPTANCE_SEEDS = tuple(range(20))


def corridor(wall_gap_px: float, radius: int = 10) -> SceneConfig:
    """Agent at (200, 100) facing West, a tall wall whose face is `wall_gap_px` px ahead."""
    face = 200 - wall_gap_px
    assert face == int(face), "keep the wall face on an integer x"
    face = int(face)
    return SceneConfig(
        map=MapSpec(width=400, height=200, agent_radius=radius),
        obstacles=(
            Obstacle("wall", face - 20, 40, 20, 120, "wall", "tall"),
            Obstacle("top", 0, 0, 400, 6, "wall", "tall"),
            Obstacle("bottom", 0, 194, 400, 6, "wall", "tall"),
        ),
        pairs=(StartTargetPair((200, 100), 0, (300, 100)),),
        name="corridor",
    )


def box_scene() -> SceneConfig:
    """Small open room with one crate and one robot on a loop."""
    return SceneConfig(
        map=MapSpec(width=340, height=238),
        obstacles=(Obstacle("crate", 136, 34, 34, 34, "container", "tall"),),
        entities=(DynamicEntity("robot-0", "robot", 14, ((40, 200), (300, 200)), speed=6, phase=0),),
        pairs=(
            StartTargetPair((51, 51), 180, (255, 51)),
            StartTargetPair((51, 119), 270, (51, 51)),
        ),
        name="box",
    )


_GEN_CACHE: dict[int, SceneConfig] = {}


def generated(seed: int) -> SceneConfig:
    if seed not in _GEN_CACHE:
        _GEN_CACHE[seed] = generate_scene(seed)
    return _GEN_CACHE[seed]


@pytest.fixture
def box():
    return box_scene()


def hand_distance(a, b) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA[n] = (title, status, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2} {status}  {title}  ({secs:.2f}s)")
