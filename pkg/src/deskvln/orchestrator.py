"""Reason-act rollout loop: observation frames, context fusion, mode
arbitration, the motion-command grammar, and the cycle driver that turns a
decision backend into a trajectory."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol, Sequence, TypeVar, runtime_checkable

from .errors import CommandParseError, SchemaError, ValidationError
from .kinematics import (
    FORWARD_STEP_M,
    MODE_ACT,
    MODE_REASON,
    SCHEMA_VERSION,
    TERMINATED_BUDGET,
    TERMINATED_INCOMPLETE,
    TERMINATED_STOP,
    TURN_STEP_DEG,
    ActionPrimitive,
    Pose,
    StepMarker,
    StepRecord,
    Trajectory,
    apply_action,
)
from .serde import dumps_compact
from .world import Episode, SceneWorld, room_at

log = logging.getLogger(__name__)

INITIAL_REASONING = "None"

_T = TypeVar("_T")


@dataclass(frozen=True)
class FOVConfig:
    """Visibility cone for landmark observation."""

    radius_m: float = 3.0
    half_angle_deg: float = 60.0

    def validate(self) -> None:
        if not (self.radius_m > 0.0):
            raise ValidationError("fov radius_m must be positive")
        if not (0.0 < self.half_angle_deg <= 180.0):
            raise ValidationError("fov half_angle_deg must be in (0, 180]")


@dataclass(frozen=True)
class ObservationFrame:
    """One egocentric observation: where the agent stood and what it saw."""

    t: int
    pose: Pose
    room: str | None
    visible_landmarks: tuple[str, ...]
    steps_since_reasoning: int

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "pose": self.pose.to_json(),
            "room": self.room,
            "visible_landmarks": list(self.visible_landmarks),
            "steps_since_reasoning": self.steps_since_reasoning,
        }

    @staticmethod
    def from_json(obj: dict) -> "ObservationFrame":
        try:
            return ObservationFrame(
                t=int(obj["t"]),
                pose=Pose.from_json(obj["pose"]),
                room=obj["room"],
                visible_landmarks=tuple(str(s) for s in obj["visible_landmarks"]),
                steps_since_reasoning=int(obj["steps_since_reasoning"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad observation frame: {exc}") from exc


@dataclass(frozen=True)
class PolicyDecision:
    """Raw backend output for one cycle: two mode logits and the text head."""

    d_reason: float
    d_act: float
    text: str

    def to_json(self) -> dict:
        return {"d_reason": self.d_reason, "d_act": self.d_act, "text": self.text}

    @staticmethod
    def from_json(obj: dict) -> "PolicyDecision":
        try:
            d_r = float(obj["d_reason"])
            d_a = float(obj["d_act"])
            text = obj["text"]
            if not isinstance(text, str):
                raise TypeError("text must be a string")
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad policy decision: {exc}") from exc
        return PolicyDecision(d_reason=d_r, d_act=d_a, text=text)


@runtime_checkable
class PolicyBackend(Protocol):
    """Decision source for the rollout loop.

    ``shareable`` declares whether one instance may serve several concurrent
    rollouts; stateful backends that track a single episode must say False.
    """

    shareable: bool

    def decide(
        self,
        instruction: str,
        fused_context: str,
        frames: Sequence[ObservationFrame],
    ) -> PolicyDecision: ...


def fuse_reasoning_context(reasoning: str, t: int, t_prev: int) -> str:
    """Join the latest reasoning with a staleness marker for cycle t."""
    if t_prev > t:
        raise ValueError(f"t_prev={t_prev} is ahead of t={t}")
    return f"{reasoning} [steps_since_reasoning={t - t_prev}]"


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0.0 else -int(math.floor(-x + 0.5))


def sample_frames(frames: Sequence[_T], k: int) -> list[_T]:
    """Pick k evenly spaced frames (first and last always kept)."""
    if k < 1:
        raise ValueError(f"frame budget k={k} must be at least 1")
    n = len(frames)
    if n == 0:
        raise ValueError("cannot sample from an empty frame buffer")
    if n <= k:
        return list(frames)
    if k == 1:
        return [frames[0]]
    idx = [_round_half_away(i * (n - 1) / (k - 1)) for i in range(k)]
    return [frames[i] for i in idx]


def decide_mode(d_reason: float, d_act: float) -> str:
    """Arbitrate the cycle mode; ties go to acting."""
    if not (math.isfinite(d_reason) and math.isfinite(d_act)):
        raise ValueError(f"non-finite mode logits ({d_reason}, {d_act})")
    return MODE_REASON if d_reason > d_act else MODE_ACT


def _wrap_angle(deg: float) -> float:
    return ((deg + 180.0) % 360.0) - 180.0


def visible_landmarks(world: SceneWorld, pose: Pose, fov: FOVConfig) -> tuple[str, ...]:
    """Landmark ids inside the cone, nearest first; ties break on the id."""
    seen: list[tuple[float, str]] = []
    for lm in world.landmarks:
        dx = lm.x - pose.x
        dy = lm.y - pose.y
        d = math.hypot(dx, dy)
        if d > fov.radius_m:
            continue
        if d > 0.0:
            bearing = math.degrees(math.atan2(dy, dx))
            if abs(_wrap_angle(bearing - pose.heading)) > fov.half_angle_deg:
                continue
        seen.append((d, lm.landmark_id))
    seen.sort()
    return tuple(name for _, name in seen)


def make_frame(
    world: SceneWorld,
    pose: Pose,
    t: int,
    t_prev: int,
    fov: FOVConfig,
) -> ObservationFrame:
    if t_prev > t:
        raise ValueError(f"t_prev={t_prev} is ahead of t={t}")
    return ObservationFrame(
        t=t,
        pose=pose,
        room=room_at(world, pose.x, pose.y),
        visible_landmarks=visible_landmarks(world, pose, fov),
        steps_since_reasoning=t - t_prev,
    )


# Motion-command grammar. Amounts are quantized onto the primitive steps
# (25 cm, 15 deg) with round-half-away-from-zero and a floor of one step.
_RE_STOP = re.compile(r"stop\s*\.?")
_RE_FORWARD = re.compile(r"move\s+forward\s+(\d+(?:\.\d+)?)\s*(cm|m)\s*\.?")
_RE_TURN = re.compile(r"turn\s+(left|right)\s+(\d+(?:\.\d+)?)\s*degrees\s*\.?")


def parse_action_text(text: str) -> list[ActionPrimitive]:
    """Translate a motion command into primitives.

    Raises CommandParseError for anything outside the grammar.
    """
    s = text.strip().lower()
    if _RE_STOP.fullmatch(s):
        return [ActionPrimitive.STOP]
    m = _RE_FORWARD.fullmatch(s)
    if m:
        amount = float(m.group(1))
        cm = amount * 100.0 if m.group(2) == "m" else amount
        n = max(1, _round_half_away(cm / (FORWARD_STEP_M * 100.0)))
        return [ActionPrimitive.FORWARD] * n
    m = _RE_TURN.fullmatch(s)
    if m:
        n = max(1, _round_half_away(float(m.group(2)) / TURN_STEP_DEG))
        prim = ActionPrimitive.TURN_LEFT if m.group(1) == "left" else ActionPrimitive.TURN_RIGHT
        return [prim] * n
    raise CommandParseError(text, "not a recognized motion command")


def render_command(primitives: Sequence[ActionPrimitive]) -> str:
    """Inverse of parse_action_text for a uniform run of primitives."""
    if not primitives:
        raise ValueError("cannot render an empty primitive run")
    head = primitives[0]
    if any(p is not head for p in primitives):
        raise ValueError("render_command needs a uniform run of one primitive")
    n = len(primitives)
    if head is ActionPrimitive.STOP:
        if n != 1:
            raise ValueError("stop is a single-primitive command")
        return "stop"
    if head is ActionPrimitive.FORWARD:
        return f"move forward {n * 25} cm"
    side = "left" if head is ActionPrimitive.TURN_LEFT else "right"
    return f"turn {side} {n * 15} degrees"


EVENT_REASON = "reason"
EVENT_PARSE_ERROR = "parse-error"
EVENT_BACKEND_ERROR = "backend-error"

_EVENT_KINDS = (EVENT_REASON, EVENT_PARSE_ERROR, EVENT_BACKEND_ERROR)


@dataclass(frozen=True)
class ReasoningEvent:
    """One logged reasoning-side occurrence at cycle t."""

    t: int
    kind: str
    text: str

    def validate(self) -> None:
        if self.t < 0:
            raise ValidationError(f"event t={self.t} is negative")
        if self.kind not in _EVENT_KINDS:
            raise ValidationError(f"unknown event kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"t": self.t, "kind": self.kind, "text": self.text}

    @staticmethod
    def from_json(obj: dict) -> "ReasoningEvent":
        try:
            ev = ReasoningEvent(t=int(obj["t"]), kind=str(obj["kind"]), text=str(obj["text"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad reasoning event: {exc}") from exc
        ev.validate()
        return ev


@dataclass(frozen=True)
class ReasoningLog:
    """Per-episode record of reasoning text and decode failures."""

    episode_id: str
    events: tuple[ReasoningEvent, ...]

    def validate(self) -> None:
        prev = -1
        for ev in self.events:
            ev.validate()
            if ev.t < prev:
                raise ValidationError("reasoning events out of order")
            prev = ev.t

    def to_jsonl(self) -> str:
        header = {
            "schema": SCHEMA_VERSION,
            "kind": "reasoning-log",
            "episode_id": self.episode_id,
        }
        lines = [dumps_compact(header)]
        lines.extend(dumps_compact(ev.to_json()) for ev in self.events)
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "ReasoningLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise SchemaError("empty reasoning log")
        import json

        try:
            header = json.loads(lines[0])
        except ValueError as exc:
            raise SchemaError(f"bad reasoning log header: {exc}") from exc
        if header.get("kind") != "reasoning-log":
            raise SchemaError(f"not a reasoning log: kind={header.get('kind')!r}")
        if header.get("schema") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema {header.get('schema')!r}")
        events = []
        for ln in lines[1:]:
            try:
                obj = json.loads(ln)
            except ValueError as exc:
                raise SchemaError(f"bad reasoning log line: {exc}") from exc
            events.append(ReasoningEvent.from_json(obj))
        out = ReasoningLog(episode_id=str(header.get("episode_id", "")), events=tuple(events))
        out.validate()
        return out


@dataclass
class RolloutState:
    """Mutable loop state, exposed to observers before each dispatch."""

    t: int
    t_prev: int
    reasoning: str
    frames: list[ObservationFrame]


@dataclass(frozen=True)
class RolloutConfig:
    step_budget: int = 500
    frames_k: int = 8
    fov: FOVConfig = field(default_factory=FOVConfig)

    def validate(self) -> None:
        if self.step_budget < 1:
            raise ValidationError(f"step_budget={self.step_budget} must be positive")
        if self.frames_k < 1:
            raise ValidationError(f"frames_k={self.frames_k} must be positive")
        self.fov.validate()


Observer = Callable[[RolloutState, PolicyDecision, str], None]


def run_rollout(
    world: SceneWorld,
    episode: Episode,
    backend: PolicyBackend,
    config: RolloutConfig | None = None,
    observer: Observer | None = None,
) -> tuple[Trajectory, ReasoningLog]:
    """Drive the backend until it stops, fails, or exhausts the cycle budget.

    Trajectory steps are per primitive; the cycle counter t indexes the frame
    buffer, which holds exactly t+1 frames when the backend is consulted.
    A reason cycle appends one stationary marker record, an act cycle appends
    one record per parsed primitive, and an unparseable command appends a
    stationary no-op record so the failure stays visible in the trajectory.
    Backend exceptions abort the episode; the partial trajectory comes back
    flagged incomplete rather than raising.
    """
    cfg = config or RolloutConfig()
    cfg.validate()
    episode.validate()
    pose = episode.start
    if not world.in_bounds(pose.x, pose.y) or not world.is_free(pose.x, pose.y):
        raise ValidationError(
            f"episode {episode.episode_id} starts at a blocked pose ({pose.x}, {pose.y})"
        )

    state = RolloutState(
        t=0,
        t_prev=0,
        reasoning=INITIAL_REASONING,
        frames=[make_frame(world, pose, 0, 0, cfg.fov)],
    )
    records: list[StepRecord] = []
    events: list[ReasoningEvent] = []
    rec_i = 0
    terminated = None

    while state.t < cfg.step_budget:
        fused = fuse_reasoning_context(state.reasoning, state.t, state.t_prev)
        sampled = sample_frames(state.frames, cfg.frames_k)
        try:
            decision = backend.decide(episode.instruction, fused, sampled)
        except Exception as exc:
            log.warning(
                "backend failed on episode %s at cycle %d: %s",
                episode.episode_id,
                state.t,
                exc,
            )
            events.append(ReasoningEvent(state.t, EVENT_BACKEND_ERROR, str(exc)))
            terminated = TERMINATED_INCOMPLETE
            break
        mode = decide_mode(decision.d_reason, decision.d_act)
        if observer is not None:
            observer(state, decision, mode)

        stopped = False
        room = room_at(world, pose.x, pose.y)
        if mode == MODE_REASON:
            records.append(
                StepRecord(rec_i, pose, pose, StepMarker.REASON, False, room, MODE_REASON)
            )
            rec_i += 1
            events.append(ReasoningEvent(state.t, EVENT_REASON, decision.text))
            state.reasoning = decision.text
            state.t_prev = state.t
        else:
            try:
                prims = parse_action_text(decision.text)
            except CommandParseError as exc:
                log.debug("unparseable command at cycle %d: %r", state.t, exc.text)
                events.append(ReasoningEvent(state.t, EVENT_PARSE_ERROR, decision.text))
                records.append(
                    StepRecord(rec_i, pose, pose, StepMarker.NOOP, False, room, MODE_ACT)
                )
                rec_i += 1
                prims = []
            for prim in prims:
                new_pose, collided = apply_action(world, pose, prim)
                records.append(
                    StepRecord(
                        rec_i,
                        pose,
                        new_pose,
                        prim,
                        collided,
                        room_at(world, new_pose.x, new_pose.y),
                        MODE_ACT,
                    )
                )
                pose = new_pose
                rec_i += 1
                if prim is ActionPrimitive.STOP:
                    stopped = True

        state.t += 1
        state.frames.append(make_frame(world, pose, state.t, state.t_prev, cfg.fov))
        if stopped:
            terminated = TERMINATED_STOP
            break

    if terminated is None:
        terminated = TERMINATED_BUDGET
    traj = Trajectory(episode.episode_id, tuple(records), terminated)
    traj.validate()
    rlog = ReasoningLog(episode.episode_id, tuple(events))
    rlog.validate()
    return traj, rlog
