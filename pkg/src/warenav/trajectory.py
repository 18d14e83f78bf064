"""Top-down SVG drawing of a logged episode."""

from __future__ import annotations

from xml.sax.saxutils import escape

from .episodes import EpisodeLog, replay, replay_poses
from .sensors import ENTITY_COLORS, agent_triangle, obstacle_color
from .world import SceneConfig


def _rgb(c) -> str:
    return "#%02x%02x%02x" % tuple(c)


def render_trajectory_svg(log_: EpisodeLog, scene: SceneConfig) -> str:
    """Obstacles, entity loops, the path with step markers, collisions (crosses), warnings (hollow circles).

    The log is replayed first, so a tampered or mismatched log raises `ReplayDivergence`.
    """
    replay(log_, scene)
    poses = replay_poses(log_, scene)
    w, h = scene.map.width, scene.map.height
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<title>{escape(scene.name)} pair {log_.header["pair_index"]} ({escape(str(log_.header.get("policy", "")))})</title>',
        f'<rect class="floor" x="0" y="0" width="{w}" height="{h}" fill="#dedcd4"/>',
    ]
    for o in scene.obstacles:
        out.append(
            f'<rect class="obstacle" x="{o.x}" y="{o.y}" width="{o.w}" height="{o.h}" '
            f'fill="{_rgb(obstacle_color(o.kind, o.color_id))}"/>'
        )
    for e in scene.entities:
        pts = " ".join(f"{x},{y}" for x, y in (*e.waypoints, e.waypoints[0]))
        color = _rgb(ENTITY_COLORS[e.kind])
        out.append(f'<polyline class="entity-loop" points="{pts}" fill="none" stroke="{color}" stroke-dasharray="6 4"/>')
        cx, cy = e.position_at(e.phase)
        out.append(f'<circle class="entity" cx="{cx:.1f}" cy="{cy:.1f}" r="{e.radius}" fill="{color}" opacity="0.6"/>')

    path = " ".join(f"{p.x},{p.y}" for p in poses)
    out.append(f'<polyline class="path" points="{path}" fill="none" stroke="#2060c0" stroke-width="2"/>')
    seen = set()
    for p in poses:
        if (p.x, p.y) not in seen:
            seen.add((p.x, p.y))
            out.append(f'<circle class="step" cx="{p.x}" cy="{p.y}" r="2.5" fill="#2060c0"/>')
    for rec in log_.records:
        x, y = rec.pose_after[0], rec.pose_after[1]
        if rec.collided:
            out.append(
                f'<g class="collision" stroke="#000000" stroke-width="2">'
                f'<line x1="{x - 6}" y1="{y - 6}" x2="{x + 6}" y2="{y + 6}"/>'
                f'<line x1="{x - 6}" y1="{y + 6}" x2="{x + 6}" y2="{y - 6}"/></g>'
            )
        if rec.warning:
            out.append(f'<circle class="warning" cx="{x}" cy="{y}" r="9" fill="none" stroke="#e08000" stroke-width="1.5"/>')

    tx, ty = scene.pairs[log_.header["pair_index"]].target
    out.append(f'<circle class="target" cx="{tx}" cy="{ty}" r="7" fill="#14be3c"/>')
    last = poses[-1]
    tri = " ".join(f"{x:.1f},{y:.1f}" for x, y in agent_triangle(last.x, last.y, last.theta))
    out.append(f'<polygon class="agent" points="{tri}" fill="#dc1414"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
