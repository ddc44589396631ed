"""Trajectory visualization: a best-effort terminal grid and an SVG trace
whose node markers mirror the node file one to one."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .engine import (
    CAUSE_CORRECTION,
    CAUSE_ROOM_CHANGE,
    NODE_DEVIATION,
    NODE_STOP_ERROR,
    NODE_SUBTASK,
    KeyNode,
)
from .kinematics import Trajectory
from .world import Episode, SceneWorld

_NODE_GLYPH = {
    (NODE_SUBTASK, CAUSE_ROOM_CHANGE): "S",
    (NODE_SUBTASK, CAUSE_CORRECTION): "C",
    (NODE_DEVIATION, None): "D",
    (NODE_STOP_ERROR, None): "E",
}

_NODE_CLASS = {
    (NODE_SUBTASK, CAUSE_ROOM_CHANGE): "node-subtask",
    (NODE_SUBTASK, CAUSE_CORRECTION): "node-correction",
    (NODE_DEVIATION, None): "node-deviation",
    (NODE_STOP_ERROR, None): "node-stop",
}

_NODE_COLOR = {
    "node-subtask": "#2a9d3e",
    "node-correction": "#1d7ac4",
    "node-deviation": "#e08b1f",
    "node-stop": "#d43a3a",
}


def _node_key(node: KeyNode) -> tuple[str, str | None]:
    return (node.node_type, node.cause if node.node_type == NODE_SUBTASK else None)


def render_trace_text(
    world: SceneWorld,
    traj: Trajectory | None = None,
    nodes: list[KeyNode] | None = None,
    episode: Episode | None = None,
    max_cols: int = 78,
) -> str:
    """Character map: '#' walls, '.' free, '*' the walked line, letters for
    nodes (S/C/D/E), 'A' start and 'G' goal.  Rows print top of the world
    first.  Coarse by construction; the SVG is the faithful view."""
    if max_cols < 8:
        raise ValueError(f"max_cols={max_cols} too narrow")
    ny, nx = world.ny, world.nx
    scale = max(1, math.ceil(nx / max_cols))
    gx = math.ceil(nx / scale)
    gy = math.ceil(ny / scale)
    grid = [["." for _ in range(gx)] for _ in range(gy)]
    occ = world.occupancy
    for gy_i in range(gy):
        for gx_i in range(gx):
            block = occ[
                gy_i * scale : min((gy_i + 1) * scale, ny),
                gx_i * scale : min((gx_i + 1) * scale, nx),
            ]
            if block.any():
                grid[gy_i][gx_i] = "#"

    def put(x: float, y: float, ch: str) -> None:
        ix, iy = world.cell_of(x, y)
        grid[min(iy // scale, gy - 1)][min(ix // scale, gx - 1)] = ch

    if traj is not None and traj.steps:
        for rec in traj.steps:
            put(rec.pose_after.x, rec.pose_after.y, "*")
    if episode is not None:
        put(episode.start.x, episode.start.y, "A")
        put(episode.goal[0], episode.goal[1], "G")
    if traj is not None and nodes:
        for node in nodes:
            p = traj.steps[node.step].pose_after
            put(p.x, p.y, _NODE_GLYPH[_node_key(node)])
    rows = ["".join(r) for r in reversed(grid)]
    return "\n".join(rows) + "\n"


def _svg_y(world: SceneWorld, y: float, s: float) -> float:
    return (world.height - y) * s


def render_trace_svg(
    world: SceneWorld,
    traj: Trajectory | None = None,
    nodes: list[KeyNode] | None = None,
    episode: Episode | None = None,
    px_per_m: float = 80.0,
) -> str:
    """SVG trace.  Every node becomes exactly one marker circle carrying
    data-step and data-type attributes, in node-file order."""
    s = px_per_m
    w_px = world.width * s
    h_px = world.height * s
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w_px:.1f} {h_px:.1f}" '
        f'width="{w_px:.0f}" height="{h_px:.0f}">',
        f'<rect x="0" y="0" width="{w_px:.1f}" height="{h_px:.1f}" fill="#fafaf7"/>',
    ]

    # Obstacle cells, merged into row runs to keep the file small.
    occ = world.occupancy
    res = world.grid_resolution
    cell_px = res * s
    parts.append('<g fill="#4a4a48">')
    for iy in range(world.ny):
        ix = 0
        row = occ[iy]
        while ix < world.nx:
            if row[ix]:
                run = ix
                while run < world.nx and row[run]:
                    run += 1
                x0 = ix * cell_px
                y0 = _svg_y(world, (iy + 1) * res, s)
                parts.append(
                    f'<rect x="{x0:.1f}" y="{y0:.1f}" '
                    f'width="{(run - ix) * cell_px:.1f}" height="{cell_px:.1f}"/>'
                )
                ix = run
            else:
                ix += 1
    parts.append("</g>")

    for room in world.rooms:
        r = room.rect
        parts.append(
            f'<rect x="{r.x0 * s:.1f}" y="{_svg_y(world, r.y1, s):.1f}" '
            f'width="{(r.x1 - r.x0) * s:.1f}" height="{(r.y1 - r.y0) * s:.1f}" '
            f'fill="none" stroke="#b9b9b4" stroke-dasharray="6 4"/>'
        )
        parts.append(
            f'<text x="{(r.x0 + 0.1) * s:.1f}" y="{_svg_y(world, r.y1 - 0.05, s) + 14:.1f}" '
            f'font-family="sans-serif" font-size="13" fill="#8a8a85">'
            f"{escape(room.category)}</text>"
        )

    for lm in world.landmarks:
        parts.append(
            f'<circle cx="{lm.x * s:.1f}" cy="{_svg_y(world, lm.y, s):.1f}" r="4" '
            f'fill="#9467bd"/>'
        )

    if episode is not None and len(episode.gt_waypoints) > 1:
        pts = " ".join(
            f"{x * s:.1f},{_svg_y(world, y, s):.1f}" for x, y in episode.gt_waypoints
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="#74b56a" '
            f'stroke-width="2" stroke-dasharray="8 5"/>'
        )

    if traj is not None and traj.steps:
        first = traj.steps[0].pose_before
        walk = [(first.x, first.y)]
        for rec in traj.steps:
            p = (rec.pose_after.x, rec.pose_after.y)
            if p != walk[-1]:
                walk.append(p)
        pts = " ".join(f"{x * s:.1f},{_svg_y(world, y, s):.1f}" for x, y in walk)
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="#1f6fb2" stroke-width="2.5"/>'
        )

    if episode is not None:
        parts.append(
            f'<circle cx="{episode.start.x * s:.1f}" cy="{_svg_y(world, episode.start.y, s):.1f}" '
            f'r="6" fill="#ffffff" stroke="#1f6fb2" stroke-width="2.5"/>'
        )
        gx_, gy_ = episode.goal
        parts.append(
            f'<circle cx="{gx_ * s:.1f}" cy="{_svg_y(world, gy_, s):.1f}" '
            f'r="7" fill="none" stroke="#2a9d3e" stroke-width="3"/>'
        )

    if traj is not None and nodes:
        parts.append('<g class="key-nodes">')
        for node in nodes:
            p = traj.steps[node.step].pose_after
            klass = _NODE_CLASS[_node_key(node)]
            parts.append(
                f'<circle class="{klass}" data-step="{node.step}" '
                f'data-type="{escape(node.node_type)}" '
                f'cx="{p.x * s:.1f}" cy="{_svg_y(world, p.y, s):.1f}" r="8" '
                f'fill="{_NODE_COLOR[klass]}" fill-opacity="0.85" stroke="#ffffff" '
                f'stroke-width="2"/>'
            )
        parts.append("</g>")

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
