"""Poses, motion primitives, step records, and trajectory files.

Conventions: positions in meters, headings in degrees counterclockwise from
+x and normalized to [0, 360).  One FORWARD covers 0.25 m, one turn rotates
15 degrees.  A FORWARD whose swept segment would leave free space is a
recorded no-op (collided=True, pose unchanged), never an exception.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING

from deskvln.errors import SchemaError, ValidationError

if TYPE_CHECKING:
    from deskvln.world import SceneWorld

FORWARD_STEP_M = 0.25
TURN_STEP_DEG = 15.0

MODE_REASON = "[REASON]"
MODE_ACT = "[ACT]"

TAG_NORMAL = "normal"
TAG_DEVIATED = "deviated"
TAG_CORRECTING = "correcting"
SEGMENT_TAGS = (TAG_NORMAL, TAG_DEVIATED, TAG_CORRECTING)

TERMINATED_STOP = "stop"
TERMINATED_BUDGET = "step-budget"
TERMINATED_INCOMPLETE = "incomplete"
_TERMINATIONS = (TERMINATED_STOP, TERMINATED_BUDGET, TERMINATED_INCOMPLETE)

SCHEMA_VERSION = 1


class ActionPrimitive(Enum):
    FORWARD = "FORWARD"
    TURN_LEFT = "TURN-LEFT"
    TURN_RIGHT = "TURN-RIGHT"
    STOP = "STOP"


class StepMarker(Enum):
    """Trajectory rows that are not motion primitives."""

    REASON = "REASON"  # a reasoning update; pose never changes
    NOOP = "NOOP"  # action text that failed to parse; logged no-op


def normalize_heading(deg: float) -> float:
    h = deg % 360.0
    if h >= 360.0:  # float modulo can round up to exactly 360
        h = 0.0
    return h


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError("pose components must be finite")
        object.__setattr__(self, "heading", normalize_heading(self.heading))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def to_json(self) -> list[float]:
        return [self.x, self.y, self.heading]

    @classmethod
    def from_json(cls, obj: object, where: str) -> "Pose":
        if not (isinstance(obj, list) and len(obj) == 3 and all(isinstance(v, (int, float)) for v in obj)):
            raise SchemaError(f"{where}: expected [x, y, heading]")
        try:
            return cls(float(obj[0]), float(obj[1]), float(obj[2]))
        except ValueError as exc:
            raise SchemaError(f"{where}: {exc}") from exc


def apply_action(world: "SceneWorld", pose: Pose, action: ActionPrimitive) -> tuple[Pose, bool]:
    """Execute one primitive.  Returns (new pose, collided).

    FORWARD sweeps the 0.25 m motion segment at grid resolution; if any
    sample is out of bounds or inside an obstacle the move is a no-op and
    collided is True.  Turns and STOP cannot collide.
    """
    if action is ActionPrimitive.STOP:
        return pose, False
    if action is ActionPrimitive.TURN_LEFT:
        return Pose(pose.x, pose.y, pose.heading + TURN_STEP_DEG), False
    if action is ActionPrimitive.TURN_RIGHT:
        return Pose(pose.x, pose.y, pose.heading - TURN_STEP_DEG), False
    rad = math.radians(pose.heading)
    dx = FORWARD_STEP_M * math.cos(rad)
    dy = FORWARD_STEP_M * math.sin(rad)
    n = max(1, math.ceil(FORWARD_STEP_M / world.grid_resolution))
    for i in range(1, n + 1):
        f = i / n
        px = pose.x + dx * f
        py = pose.y + dy * f
        if not world.is_free(px, py):
            return pose, True
    return Pose(pose.x + dx, pose.y + dy, pose.heading), False


@dataclass(frozen=True)
class StepRecord:
    t: int
    pose_before: Pose
    pose_after: Pose
    action: ActionPrimitive | StepMarker
    collided: bool
    room: str | None
    mode: str
    segment_tag: str = TAG_NORMAL

    def validate(self) -> None:
        if self.t < 0:
            raise ValidationError(f"step {self.t}: t must be >= 0")
        if self.mode not in (MODE_REASON, MODE_ACT):
            raise ValidationError(f"step {self.t}: bad mode {self.mode!r}")
        if self.segment_tag not in SEGMENT_TAGS:
            raise ValidationError(f"step {self.t}: bad segment_tag {self.segment_tag!r}")
        stationary = (
            isinstance(self.action, StepMarker)
            or self.action is ActionPrimitive.STOP
            or (self.action is ActionPrimitive.FORWARD and self.collided)
        )
        if stationary and (self.pose_before != self.pose_after):
            raise ValidationError(f"step {self.t}: stationary action changed the pose")
        if isinstance(self.action, StepMarker):
            if self.action is StepMarker.REASON and self.mode != MODE_REASON:
                raise ValidationError(f"step {self.t}: REASON row must carry mode {MODE_REASON}")
            if self.action is StepMarker.NOOP and self.mode != MODE_ACT:
                raise ValidationError(f"step {self.t}: NOOP row must carry mode {MODE_ACT}")
        elif self.mode != MODE_ACT:
            raise ValidationError(f"step {self.t}: primitive row must carry mode {MODE_ACT}")
        if self.action is ActionPrimitive.FORWARD and not self.collided:
            moved = math.hypot(
                self.pose_after.x - self.pose_before.x, self.pose_after.y - self.pose_before.y
            )
            if abs(moved - FORWARD_STEP_M) > 1e-6:
                raise ValidationError(f"step {self.t}: FORWARD moved {moved:.6f} m")

    def displacement(self) -> float:
        return math.hypot(
            self.pose_after.x - self.pose_before.x, self.pose_after.y - self.pose_before.y
        )


@dataclass(frozen=True)
class Trajectory:
    episode_id: str
    steps: tuple[StepRecord, ...]
    terminated_by: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))

    def validate(self) -> None:
        if not self.episode_id:
            raise ValidationError("trajectory: empty episode_id")
        if self.terminated_by not in _TERMINATIONS:
            raise ValidationError(f"trajectory: bad terminated_by {self.terminated_by!r}")
        for i, step in enumerate(self.steps):
            step.validate()
            if step.t != i:
                raise ValidationError(f"trajectory: step {i} carries t={step.t}")
            if i > 0 and self.steps[i - 1].pose_after != step.pose_before:
                raise ValidationError(f"trajectory: pose chain breaks at step {i}")

    @property
    def final_pose(self) -> Pose:
        if not self.steps:
            raise ValidationError("trajectory: no steps")
        return self.steps[-1].pose_after


def path_length(traj: Trajectory) -> float:
    """Sum of Euclidean step displacements; turns and no-ops contribute 0."""
    return sum(s.displacement() for s in traj.steps)


def _action_to_json(action: ActionPrimitive | StepMarker) -> str:
    return action.value


def _action_from_json(value: object, where: str) -> ActionPrimitive | StepMarker:
    if isinstance(value, str):
        for enum in (ActionPrimitive, StepMarker):
            try:
                return enum(value)
            except ValueError:
                pass
    raise SchemaError(f"{where}: unknown action {value!r}")


def trajectory_to_jsonl(traj: Trajectory) -> str:
    lines = [
        json.dumps(
            {
                "schema": SCHEMA_VERSION,
                "kind": "trajectory",
                "episode_id": traj.episode_id,
                "terminated_by": traj.terminated_by,
            },
            separators=(",", ":"),
        )
    ]
    for s in traj.steps:
        lines.append(
            json.dumps(
                {
                    "t": s.t,
                    "pose_before": s.pose_before.to_json(),
                    "pose_after": s.pose_after.to_json(),
                    "action": _action_to_json(s.action),
                    "collided": s.collided,
                    "room": s.room,
                    "mode": s.mode,
                    "segment_tag": s.segment_tag,
                },
                separators=(",", ":"),
            )
        )
    return "\n".join(lines) + "\n"


def trajectory_from_jsonl(text: str) -> Trajectory:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("trajectory: empty file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaError(f"trajectory header: invalid JSON ({exc})") from exc
    if not isinstance(header, dict) or header.get("kind") != "trajectory":
        raise SchemaError("trajectory header: kind must be 'trajectory'")
    if header.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"trajectory header: unsupported schema {header.get('schema')!r}")
    for key in ("episode_id", "terminated_by"):
        if not isinstance(header.get(key), str):
            raise SchemaError(f"trajectory header: missing field {key}")
    steps = []
    for i, line in enumerate(lines[1:]):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"trajectory step {i}: invalid JSON ({exc})") from exc
        if not isinstance(obj, dict):
            raise SchemaError(f"trajectory step {i}: expected an object")
        where = f"trajectory step {i}"
        for key in ("t", "pose_before", "pose_after", "action", "collided", "room", "mode", "segment_tag"):
            if key not in obj:
                raise SchemaError(f"{where}: missing field {key}")
        if not isinstance(obj["t"], int):
            raise SchemaError(f"{where}: t must be an integer")
        if not isinstance(obj["collided"], bool):
            raise SchemaError(f"{where}: collided must be a boolean")
        if obj["room"] is not None and not isinstance(obj["room"], str):
            raise SchemaError(f"{where}: room must be a string or null")
        steps.append(
            StepRecord(
                t=obj["t"],
                pose_before=Pose.from_json(obj["pose_before"], f"{where}.pose_before"),
                pose_after=Pose.from_json(obj["pose_after"], f"{where}.pose_after"),
                action=_action_from_json(obj["action"], f"{where}.action"),
                collided=obj["collided"],
                room=obj["room"],
                mode=obj["mode"] if isinstance(obj["mode"], str) else "",
                segment_tag=obj["segment_tag"] if isinstance(obj["segment_tag"], str) else "",
            )
        )
    traj = Trajectory(
        episode_id=header["episode_id"], steps=tuple(steps), terminated_by=header["terminated_by"]
    )
    traj.validate()
    return traj
