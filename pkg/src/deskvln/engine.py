"""Demonstration collection and key-node mining.

Collectors drive a waypoint follower over the reference route, either
cleanly or with seeded error bursts plus scripted corrections.  Detectors
replay finished trajectories and mark the moments worth explaining: room
transitions, completed corrections, route deviations, and bad endings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import CollectionError, SchemaError, ValidationError
from .kinematics import (
    MODE_ACT,
    SCHEMA_VERSION,
    TAG_CORRECTING,
    TAG_DEVIATED,
    TAG_NORMAL,
    TERMINATED_STOP,
    TURN_STEP_DEG,
    ActionPrimitive,
    Pose,
    StepRecord,
    Trajectory,
    apply_action,
    normalize_heading,
)
from .orchestrator import FOVConfig, ObservationFrame, visible_landmarks
from .serde import dumps_compact, stable_rng
from .world import (
    Episode,
    SceneWorld,
    goal_field,
    room_at,
    segment_free,
    shortest_path,
    smooth_polyline,
)

WAYPOINT_TOLERANCE_M = 0.25
FINAL_TOLERANCE_M = 0.15
HEADING_TOL_DEG = TURN_STEP_DEG / 2.0
PASS_TOLERANCE_M = 0.2
DEFAULT_STEP_CAP = 2000
STALL_CAP = 60

NODE_SUBTASK = "SubtaskCompletion"
NODE_DEVIATION = "PathDeviation"
NODE_STOP_ERROR = "StoppingError"
CAUSE_ROOM_CHANGE = "RoomChange"
CAUSE_CORRECTION = "CorrectionComplete"

_NODE_RANK = {
    (NODE_SUBTASK, CAUSE_ROOM_CHANGE): 0,
    (NODE_SUBTASK, CAUSE_CORRECTION): 1,
    (NODE_DEVIATION, None): 2,
    (NODE_STOP_ERROR, None): 3,
}


def _wrap_angle(deg: float) -> float:
    return ((deg + 180.0) % 360.0) - 180.0


def distance_to_polyline(p: tuple[float, float], pts: tuple | list) -> float:
    """Minimum Euclidean distance from p to the polyline through pts."""
    if not pts:
        raise ValueError("empty polyline")
    px, py = p
    ax, ay = pts[0]
    best = math.hypot(px - ax, py - ay)
    for k in range(1, len(pts)):
        bx, by = pts[k]
        vx, vy = bx - ax, by - ay
        seg2 = vx * vx + vy * vy
        if seg2 > 0.0:
            u = ((px - ax) * vx + (py - ay) * vy) / seg2
            u = 0.0 if u < 0.0 else (1.0 if u > 1.0 else u)
            d = math.hypot(px - (ax + u * vx), py - (ay + u * vy))
        else:
            d = math.hypot(px - bx, py - by)
        if d < best:
            best = d
        ax, ay = bx, by
    return best


class RouteFollower:
    """Greedy waypoint chaser on the primitive action set.

    Holds a cursor over the reference waypoints.  observe() does the
    proximity bookkeeping (a waypoint within tolerance counts as visited),
    decide() picks one primitive: rotate until the aim bearing is within
    half a turn step, then step forward.  Aiming prefers the straight shot
    to the current waypoint and falls back to a smoothed grid path when
    geometry is in the way.  Forward steps are swept against the grid
    before they are issued; a blocked step triggers a slide to the nearest
    free quantized heading instead of grinding into the wall.
    """

    def __init__(
        self,
        world: SceneWorld,
        waypoints: tuple[tuple[float, float], ...],
        waypoint_tolerance_m: float = WAYPOINT_TOLERANCE_M,
        final_tolerance_m: float = FINAL_TOLERANCE_M,
    ) -> None:
        if not waypoints:
            raise CollectionError("route has no waypoints")
        self._world = world
        self._wps = waypoints
        self._tol = waypoint_tolerance_m
        self._final_tol = final_tolerance_m
        self.cursor = 0
        self._leg: list[tuple[float, float]] | None = None
        self._leg_idx = 0
        self._escape: float | None = None

    def _tolerance(self) -> float:
        return self._final_tol if self.cursor == len(self._wps) - 1 else self._tol

    def done(self) -> bool:
        return self.cursor >= len(self._wps)

    def observe(self, pose: Pose) -> None:
        while not self.done():
            wx, wy = self._wps[self.cursor]
            if math.hypot(wx - pose.x, wy - pose.y) <= self._tolerance():
                self.cursor += 1
                self._leg = None
            else:
                break

    def notify_collision(self) -> None:
        self._leg = None
        self._escape = None

    def _replan(self, here: tuple[float, float], target: tuple[float, float]) -> None:
        route = shortest_path(self._world, here, target)
        if route is None:
            raise CollectionError(
                f"waypoint {self.cursor} at {target} is unreachable from {here}"
            )
        self._leg = smooth_polyline(self._world, route)
        self._leg_idx = 0

    def _aim(self, pose: Pose) -> tuple[float, float]:
        target = self._wps[self.cursor]
        here = (pose.x, pose.y)
        if segment_free(self._world, here, target):
            self._leg = None
            return target
        if self._leg is None:
            self._replan(here, target)
        # Retire leg vertices as we reach them; quantized headings drift us
        # off the sight line, and chasing a vertex behind our progress can
        # shuttle the follower between two poses forever.
        while self._leg_idx < len(self._leg) and (
            math.hypot(
                self._leg[self._leg_idx][0] - pose.x,
                self._leg[self._leg_idx][1] - pose.y,
            )
            <= PASS_TOLERANCE_M
        ):
            self._leg_idx += 1
        aim = None
        for v in reversed(self._leg[self._leg_idx :]):
            if segment_free(self._world, here, v):
                aim = v
                break
        if aim is None:
            # drift cost us sight of every remaining vertex
            self._replan(here, target)
            for v in reversed(self._leg[1:]):
                if segment_free(self._world, here, v):
                    aim = v
                    break
            if aim is None:
                aim = self._leg[1] if len(self._leg) > 1 else self._leg[0]
        return aim

    def _forward_free(self, pose: Pose, heading: float) -> bool:
        _, collided = apply_action(
            self._world, Pose(pose.x, pose.y, heading), ActionPrimitive.FORWARD
        )
        return not collided

    def decide(self, pose: Pose) -> ActionPrimitive:
        if self.done():
            raise CollectionError("follower consulted after route completion")
        if self._escape is not None:
            # committed slide: finish turning onto the free heading, step once
            if self._forward_free(pose, self._escape):
                derr = _wrap_angle(self._escape - pose.heading)
                if abs(derr) > 1e-9:
                    return ActionPrimitive.TURN_LEFT if derr > 0 else ActionPrimitive.TURN_RIGHT
                self._escape = None
                return ActionPrimitive.FORWARD
            self._escape = None
        ax, ay = self._aim(pose)
        err = _wrap_angle(math.degrees(math.atan2(ay - pose.y, ax - pose.x)) - pose.heading)
        if abs(err) > HEADING_TOL_DEG:
            return ActionPrimitive.TURN_LEFT if err > 0 else ActionPrimitive.TURN_RIGHT
        if self._forward_free(pose, pose.heading):
            return ActionPrimitive.FORWARD
        # The sight line to the aim threads a gap the quantized step cannot.
        # Slide: commit to the nearest heading whose swept step is free,
        # preferring the side the aim error points at.
        side = 1.0 if err >= 0.0 else -1.0
        for k in range(1, 13):
            for sign in (side, -side):
                if k == 12 and sign == -side:
                    break
                h = normalize_heading(pose.heading + sign * k * TURN_STEP_DEG)
                if self._forward_free(pose, h):
                    self._escape = h
                    return ActionPrimitive.TURN_LEFT if sign > 0 else ActionPrimitive.TURN_RIGHT
        # boxed in on every heading; let the stall guard report it
        return ActionPrimitive.FORWARD


@dataclass(frozen=True)
class NoisyExpertConfig:
    """Error injection for demonstration collection."""

    error_probability: float = 0.0
    error_kinds: tuple[str, ...] = ("wrong-turn", "overshoot")
    deviation_threshold_m: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if not (0.0 <= self.error_probability <= 1.0):
            raise ValidationError(
                f"error_probability={self.error_probability} outside [0, 1]"
            )
        if not self.error_kinds:
            raise ValidationError("error_kinds must name at least one kind")
        for kind in self.error_kinds:
            if kind not in ("wrong-turn", "overshoot"):
                raise ValidationError(f"unknown error kind {kind!r}")
        if self.deviation_threshold_m <= 0.0:
            raise ValidationError("deviation_threshold_m must be positive")


def _burst_primitives(rng, kind: str) -> list[ActionPrimitive]:
    if kind == "wrong-turn":
        side = rng.choice((ActionPrimitive.TURN_LEFT, ActionPrimitive.TURN_RIGHT))
        return [side] * rng.randint(3, 7) + [ActionPrimitive.FORWARD] * rng.randint(4, 9)
    return [ActionPrimitive.FORWARD] * rng.randint(4, 9)


def _collect(
    world: SceneWorld,
    episode: Episode,
    noise: NoisyExpertConfig | None,
    step_cap: int,
) -> Trajectory:
    episode.validate(world)
    pose = episode.start
    if not world.is_free(pose.x, pose.y):
        raise CollectionError(f"episode {episode.episode_id} starts inside an obstacle")
    follower = RouteFollower(world, episode.gt_waypoints)
    rng = None
    threshold = None
    if noise is not None:
        noise.validate()
        rng = stable_rng(noise.seed, "dagger", episode.episode_id)
        threshold = noise.deviation_threshold_m

    records: list[StepRecord] = []
    burst: list[ActionPrimitive] = []
    correcting = False
    stall = 0
    follower.observe(pose)
    while not follower.done():
        if len(records) >= step_cap:
            raise CollectionError(
                f"episode {episode.episode_id}: no convergence within {step_cap} steps"
            )
        tag = TAG_NORMAL
        if burst:
            prim = burst.pop(0)
        elif correcting:
            prim = follower.decide(pose)
            tag = TAG_CORRECTING
        else:
            if rng is not None and rng.random() < noise.error_probability:
                burst = _burst_primitives(rng, rng.choice(noise.error_kinds))
                prim = burst.pop(0)
            else:
                prim = follower.decide(pose)
        new_pose, collided = apply_action(world, pose, prim)
        records.append(
            StepRecord(
                len(records),
                pose,
                new_pose,
                prim,
                collided,
                room_at(world, new_pose.x, new_pose.y),
                MODE_ACT,
                tag,
            )
        )
        if collided:
            follower.notify_collision()
            stall += 1
            if stall >= STALL_CAP:
                raise CollectionError(
                    f"episode {episode.episode_id}: wedged against geometry at {pose}"
                )
        else:
            stall = 0
        pose = new_pose
        cursor_before = follower.cursor
        follower.observe(pose)
        if correcting:
            if follower.cursor > cursor_before or follower.done():
                correcting = False
        elif threshold is not None:
            d = distance_to_polyline((pose.x, pose.y), episode.gt_waypoints)
            if d > threshold:
                # Tag only the crossing step; recovery starts next step.
                records[-1] = replace(records[-1], segment_tag=TAG_DEVIATED)
                burst.clear()
                correcting = True
    records.append(
        StepRecord(
            len(records),
            pose,
            pose,
            ActionPrimitive.STOP,
            False,
            room_at(world, pose.x, pose.y),
            MODE_ACT,
            TAG_NORMAL,
        )
    )
    traj = Trajectory(episode.episode_id, tuple(records), TERMINATED_STOP)
    traj.validate()
    return traj


def collect_gt_trajectory(
    world: SceneWorld,
    episode: Episode,
    step_cap: int = DEFAULT_STEP_CAP,
) -> Trajectory:
    """Clean expert demonstration along the reference waypoints."""
    return _collect(world, episode, None, step_cap)


def collect_dagger_trajectory(
    world: SceneWorld,
    episode: Episode,
    noise: NoisyExpertConfig,
    step_cap: int = DEFAULT_STEP_CAP,
) -> Trajectory:
    """Demonstration with seeded error bursts and tagged corrections.

    With error_probability 0 the output is byte-identical to the clean
    collector: the noise draws still consume the generator, but every
    decision falls through to the same follower.
    """
    return _collect(world, episode, noise, step_cap)


@dataclass(frozen=True)
class KeyNode:
    """A trajectory moment selected for explanation.

    step indexes the trajectory record the node anchors to.  Context is
    carried twice: as step indices (what gets serialized) and as rebuilt
    observation frames (what the supervision stage consumes).
    """

    node_type: str
    step: int
    progress: float
    cause: str | None = None
    room_transition: tuple[str | None, str] | None = None
    context_steps: tuple[int, ...] = ()
    context_frames: tuple[ObservationFrame, ...] = ()
    correction_steps: tuple[int, ...] = ()
    correction_frames: tuple[ObservationFrame, ...] = ()
    ne: float | None = None
    ne_unreachable: bool = False

    def validate(self) -> None:
        if self.node_type not in (NODE_SUBTASK, NODE_DEVIATION, NODE_STOP_ERROR):
            raise ValidationError(f"unknown node type {self.node_type!r}")
        if self.step < 0:
            raise ValidationError(f"node step={self.step} is negative")
        if self.node_type == NODE_SUBTASK:
            if self.cause not in (CAUSE_ROOM_CHANGE, CAUSE_CORRECTION):
                raise ValidationError(f"subtask node needs a cause, got {self.cause!r}")
        elif self.cause is not None:
            raise ValidationError(f"{self.node_type} carries a cause")
        if self.room_transition is not None and self.cause != CAUSE_ROOM_CHANGE:
            raise ValidationError("room_transition only belongs to room-change nodes")
        if self.cause == CAUSE_ROOM_CHANGE and self.room_transition is None:
            raise ValidationError("room-change node is missing its transition")
        if self.correction_steps and self.node_type != NODE_DEVIATION:
            raise ValidationError("correction context only belongs to deviation nodes")
        if (self.ne is not None or self.ne_unreachable) and self.node_type != NODE_STOP_ERROR:
            raise ValidationError("navigation error only belongs to stopping nodes")
        if self.node_type == NODE_STOP_ERROR:
            if self.ne is None and not self.ne_unreachable:
                raise ValidationError("stopping node needs ne or the unreachable flag")
        if len(self.context_frames) not in (0, len(self.context_steps)):
            raise ValidationError("context frames out of step with context steps")

    def sort_key(self) -> tuple[int, int]:
        return (self.step, _NODE_RANK[(self.node_type, self.cause if self.node_type == NODE_SUBTASK else None)])


def compute_progress(traj: Trajectory, step: int, episode: Episode) -> float:
    """Distance walked through the given step over the reference geodesic
    length.  Deliberately unclamped: wandering runs can exceed 1."""
    if not (0 <= step < len(traj.steps)):
        raise ValueError(f"step {step} outside trajectory of {len(traj.steps)} steps")
    walked = 0.0
    for rec in traj.steps[: step + 1]:
        walked += math.hypot(
            rec.pose_after.x - rec.pose_before.x, rec.pose_after.y - rec.pose_before.y
        )
    return walked / episode.gt_geodesic_length


def detect_subtask_nodes(
    traj: Trajectory, episode: Episode, k_debounce: int = 2
) -> list[KeyNode]:
    """Room transitions (debounced) and completed corrections.

    A change counts once the new label holds for k_debounce consecutive
    steps and the new label names a room; drifting into unlabeled space
    never emits.  The transition's from-side is the last confirmed room
    label, which survives unlabeled gaps.  The first step's label is the
    baseline and is itself never an event.
    """
    if k_debounce < 1:
        raise ValueError(f"k_debounce={k_debounce} must be at least 1")
    steps = traj.steps
    if not steps:
        return []
    nodes: list[KeyNode] = []
    labels = [s.room for s in steps]
    current = labels[0]
    last_room = current
    n = len(labels)
    i = 1
    while i < n:
        if labels[i] == current:
            i += 1
            continue
        candidate = labels[i]
        confirmed = all(
            i + d < n and labels[i + d] == candidate for d in range(k_debounce)
        )
        if confirmed:
            if candidate is not None:
                nodes.append(
                    KeyNode(
                        node_type=NODE_SUBTASK,
                        cause=CAUSE_ROOM_CHANGE,
                        step=i,
                        progress=compute_progress(traj, i, episode),
                        room_transition=(last_room, candidate),
                    )
                )
                last_room = candidate
            current = candidate
        i += 1

    for s0, s1 in _correcting_runs(traj):
        nodes.append(
            KeyNode(
                node_type=NODE_SUBTASK,
                cause=CAUSE_CORRECTION,
                step=s1,
                progress=compute_progress(traj, s1, episode),
            )
        )
    nodes.sort(key=KeyNode.sort_key)
    return nodes


def _correcting_runs(traj: Trajectory) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    start = None
    for i, rec in enumerate(traj.steps):
        if rec.segment_tag == TAG_CORRECTING:
            if start is None:
                start = i
        elif start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(traj.steps) - 1))
    return runs


def detect_deviation_nodes(
    traj: Trajectory,
    episode: Episode,
    threshold_m: float = 1.0,
    rearm_ratio: float = 0.5,
) -> list[KeyNode]:
    """First step of each excursion past the route-distance threshold.

    Hysteresis: after an excursion fires, the detector stays quiet until
    the agent has come back within rearm_ratio * threshold of the route.
    """
    if threshold_m <= 0.0:
        raise ValueError(f"threshold_m={threshold_m} must be positive")
    if not (0.0 < rearm_ratio <= 1.0):
        raise ValueError(f"rearm_ratio={rearm_ratio} outside (0, 1]")
    nodes: list[KeyNode] = []
    armed = True
    for rec in traj.steps:
        d = distance_to_polyline(
            (rec.pose_after.x, rec.pose_after.y), episode.gt_waypoints
        )
        if armed and d > threshold_m:
            nodes.append(
                KeyNode(
                    node_type=NODE_DEVIATION,
                    step=rec.t,
                    progress=compute_progress(traj, rec.t, episode),
                )
            )
            armed = False
        elif not armed and d <= threshold_m * rearm_ratio:
            armed = True
    return nodes


def detect_stopping_error(
    traj: Trajectory,
    episode: Episode,
    world: SceneWorld,
    success_radius_m: float = 3.0,
) -> list[KeyNode]:
    """Terminal-step node when the run ends too far from the goal.

    Applies to every termination, step-budget exhaustion included.  An
    unreachable final pose (walled off from the goal) always counts.
    """
    if not traj.steps:
        return []
    last = traj.steps[-1]
    gf = goal_field(world, episode.goal)
    ne = gf.distance_from(last.pose_after.x, last.pose_after.y)
    if ne is None:
        return [
            KeyNode(
                node_type=NODE_STOP_ERROR,
                step=last.t,
                progress=compute_progress(traj, last.t, episode),
                ne=None,
                ne_unreachable=True,
            )
        ]
    if ne > success_radius_m:
        return [
            KeyNode(
                node_type=NODE_STOP_ERROR,
                step=last.t,
                progress=compute_progress(traj, last.t, episode),
                ne=ne,
            )
        ]
    return []


def detect_nodes(
    traj: Trajectory,
    episode: Episode,
    world: SceneWorld,
    k_debounce: int = 2,
    deviation_threshold_m: float = 1.0,
    success_radius_m: float = 3.0,
) -> list[KeyNode]:
    """All detectors, merged into step order."""
    nodes = detect_subtask_nodes(traj, episode, k_debounce)
    nodes.extend(detect_deviation_nodes(traj, episode, deviation_threshold_m))
    nodes.extend(detect_stopping_error(traj, episode, world, success_radius_m))
    nodes.sort(key=KeyNode.sort_key)
    return nodes


def frame_for_step(
    traj: Trajectory,
    step: int,
    world: SceneWorld | None = None,
    fov: FOVConfig | None = None,
) -> ObservationFrame:
    """Post-step observation reconstructed from a trajectory record."""
    rec = traj.steps[step]
    seen: tuple[str, ...] = ()
    if world is not None:
        seen = visible_landmarks(world, rec.pose_after, fov or FOVConfig())
    return ObservationFrame(
        t=step,
        pose=rec.pose_after,
        room=rec.room,
        visible_landmarks=seen,
        steps_since_reasoning=0,
    )


def extract_node_context(
    traj: Trajectory,
    node: KeyNode,
    window: int = 16,
    stride: int = 2,
    world: SceneWorld | None = None,
    fov: FOVConfig | None = None,
) -> KeyNode:
    """Attach downsampled history (and any correction run) to a node.

    Context walks back from the node step by stride, stopping at the window
    edge; order is chronological.  For deviation nodes the correcting run
    that follows is sampled at the same stride from its first step.
    """
    if window < 0:
        raise ValueError(f"window={window} must be non-negative")
    if stride < 1:
        raise ValueError(f"stride={stride} must be positive")
    if not (0 <= node.step < len(traj.steps)):
        raise ValueError(f"node step {node.step} outside trajectory")
    lo = max(0, node.step - window)
    desc = []
    s = node.step
    while s >= lo:
        desc.append(s)
        s -= stride
    ctx_steps = tuple(reversed(desc))
    ctx_frames = tuple(frame_for_step(traj, s, world, fov) for s in ctx_steps)

    corr_steps: tuple[int, ...] = ()
    corr_frames: tuple[ObservationFrame, ...] = ()
    if node.node_type == NODE_DEVIATION:
        s = node.step + 1
        n = len(traj.steps)
        while s < n and traj.steps[s].segment_tag == TAG_DEVIATED:
            s += 1
        if s < n and traj.steps[s].segment_tag == TAG_CORRECTING:
            s1 = s
            while s1 + 1 < n and traj.steps[s1 + 1].segment_tag == TAG_CORRECTING:
                s1 += 1
            corr_steps = tuple(range(s, s1 + 1, stride))
            corr_frames = tuple(frame_for_step(traj, c, world, fov) for c in corr_steps)

    out = replace(
        node,
        context_steps=ctx_steps,
        context_frames=ctx_frames,
        correction_steps=corr_steps,
        correction_frames=corr_frames,
    )
    out.validate()
    return out


def node_to_json(node: KeyNode) -> dict:
    return {
        "node_type": node.node_type,
        "cause": node.cause,
        "step": node.step,
        "progress": node.progress,
        "room_transition": list(node.room_transition) if node.room_transition else None,
        "context_steps": list(node.context_steps),
        "correction_steps": list(node.correction_steps),
        "ne": node.ne,
        "ne_unreachable": node.ne_unreachable,
    }


def node_from_json(
    obj: dict,
    traj: Trajectory | None = None,
    world: SceneWorld | None = None,
    fov: FOVConfig | None = None,
) -> KeyNode:
    try:
        transition = obj["room_transition"]
        if transition is not None:
            frm, to = transition
            transition = (frm, str(to))
        node = KeyNode(
            node_type=str(obj["node_type"]),
            cause=obj["cause"],
            step=int(obj["step"]),
            progress=float(obj["progress"]),
            room_transition=transition,
            context_steps=tuple(int(s) for s in obj["context_steps"]),
            correction_steps=tuple(int(s) for s in obj["correction_steps"]),
            ne=None if obj["ne"] is None else float(obj["ne"]),
            ne_unreachable=bool(obj["ne_unreachable"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad key node: {exc}") from exc
    node.validate()
    if traj is not None:
        node = replace(
            node,
            context_frames=tuple(
                frame_for_step(traj, s, world, fov) for s in node.context_steps
            ),
            correction_frames=tuple(
                frame_for_step(traj, s, world, fov) for s in node.correction_steps
            ),
        )
    return node


def nodes_to_jsonl(episode_id: str, nodes: list[KeyNode]) -> str:
    header = {"schema": SCHEMA_VERSION, "kind": "key-nodes", "episode_id": episode_id}
    lines = [dumps_compact(header)]
    lines.extend(dumps_compact(node_to_json(n)) for n in nodes)
    return "\n".join(lines) + "\n"


def nodes_from_jsonl(
    text: str,
    traj: Trajectory | None = None,
    world: SceneWorld | None = None,
    fov: FOVConfig | None = None,
) -> tuple[str, list[KeyNode]]:
    import json

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty node file")
    try:
        header = json.loads(lines[0])
    except ValueError as exc:
        raise SchemaError(f"bad node file header: {exc}") from exc
    if header.get("kind") != "key-nodes":
        raise SchemaError(f"not a node file: kind={header.get('kind')!r}")
    if header.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema {header.get('schema')!r}")
    nodes = []
    for ln in lines[1:]:
        try:
            obj = json.loads(ln)
        except ValueError as exc:
            raise SchemaError(f"bad node line: {exc}") from exc
        nodes.append(node_from_json(obj, traj, world, fov))
    return str(header.get("episode_id", "")), nodes
