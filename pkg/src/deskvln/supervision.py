"""Reasoning supervision: conversation assembly for key nodes, triplet
parsing with bounded format retries, and emission of interleaved
reason/act training samples."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .engine import (
    CAUSE_CORRECTION,
    CAUSE_ROOM_CHANGE,
    NODE_DEVIATION,
    NODE_STOP_ERROR,
    NODE_SUBTASK,
    KeyNode,
)
from .errors import EmissionError, SchemaError, TripletFormatError, ValidationError
from .kinematics import (
    MODE_ACT,
    MODE_REASON,
    SCHEMA_VERSION,
    StepMarker,
    Trajectory,
)
from .orchestrator import (
    INITIAL_REASONING,
    ObservationFrame,
    fuse_reasoning_context,
    render_command,
    sample_frames,
)
from .serde import dumps_compact
from .world import Episode

log = logging.getLogger(__name__)

GLOBAL_FRAME_BUDGET = 32
TRIPLET_RETRIES = 2

SCENE_HEADING = "Scene:"
PROGRESS_HEADING = "Progress:"
PLAN_HEADING = "Plan:"

CORRECTION_SEPARATOR = "[correction frames]"

FORMAT_REMINDER = (
    'Answer with exactly three labeled lines: "Scene:", "Progress:", "Plan:".'
)


@dataclass(frozen=True)
class ReasoningTriplet:
    """Structured explanation of one trajectory moment."""

    scene_description: str
    progress_assessment: str
    next_plan: str

    def validate(self) -> None:
        for name, value in (
            ("scene_description", self.scene_description),
            ("progress_assessment", self.progress_assessment),
            ("next_plan", self.next_plan),
        ):
            if not value.strip():
                raise ValidationError(f"triplet {name} is empty")


def render_triplet(triplet: ReasoningTriplet) -> str:
    triplet.validate()
    return (
        f"{SCENE_HEADING} {triplet.scene_description}\n"
        f"{PROGRESS_HEADING} {triplet.progress_assessment}\n"
        f"{PLAN_HEADING} {triplet.next_plan}"
    )


def parse_triplet(text: str) -> ReasoningTriplet:
    """Split labeled sections back out; raises ValueError on bad shape.

    Tolerant about surrounding chatter and blank lines, strict about the
    three headings appearing in order with non-empty bodies.
    """
    headings = (SCENE_HEADING, PROGRESS_HEADING, PLAN_HEADING)
    positions = []
    cursor = 0
    for h in headings:
        at = text.find(h, cursor)
        if at < 0:
            raise ValueError(f"missing {h!r} section")
        positions.append(at)
        cursor = at + len(h)
    bodies = []
    for idx, h in enumerate(headings):
        start = positions[idx] + len(h)
        end = positions[idx + 1] if idx + 1 < len(headings) else len(text)
        bodies.append(text[start:end].strip())
    triplet = ReasoningTriplet(*bodies)
    triplet.validate()
    return triplet


@dataclass(frozen=True)
class ConversationTurn:
    """One message in a reasoning conversation.

    Correction frames ride in their own field so the separator between
    pre-deviation context and recovery footage survives serialization
    structurally, not just as text.
    """

    role: str
    text: str
    frames: tuple[ObservationFrame, ...] = ()
    correction_frames: tuple[ObservationFrame, ...] = ()

    def validate(self) -> None:
        if self.role not in ("user", "assistant"):
            raise ValidationError(f"unknown turn role {self.role!r}")
        if self.role == "assistant" and (self.frames or self.correction_frames):
            raise ValidationError("assistant turns carry no frames")
        if not self.text.strip():
            raise ValidationError("turn text is empty")

    def to_json(self) -> dict:
        return {
            "role": self.role,
            "content": self.text,
            "frames": [f.to_json() for f in self.frames],
            "correction_frames": [f.to_json() for f in self.correction_frames],
        }


def build_global_turn(
    episode: Episode,
    frames: Sequence[ObservationFrame],
    max_frames: int = GLOBAL_FRAME_BUDGET,
) -> ConversationTurn:
    """Episode-level grounding: the instruction plus a capped frame sweep."""
    if not episode.instruction.strip():
        raise ValidationError(f"episode {episode.episode_id} has no instruction")
    sampled = tuple(sample_frames(list(frames), max_frames)) if frames else ()
    text = (
        f"Navigation instruction: {episode.instruction}\n"
        f"The walk so far is shown in {len(sampled)} frames."
    )
    turn = ConversationTurn(role="user", text=text, frames=sampled)
    turn.validate()
    return turn


_EVENT_PHRASES = {
    (NODE_SUBTASK, CAUSE_ROOM_CHANGE): "subtask completion (room change)",
    (NODE_SUBTASK, CAUSE_CORRECTION): "subtask completion (correction finished)",
    (NODE_DEVIATION, None): "path deviation",
    (NODE_STOP_ERROR, None): "stopping error",
}


def _node_room(node: KeyNode) -> str | None:
    if node.context_frames:
        room = node.context_frames[-1].room
        if room is not None:
            return room
    if node.room_transition is not None:
        return node.room_transition[1]
    return None


def build_node_turn(node: KeyNode) -> ConversationTurn:
    """Node-level prompt: what happened, where, and the frames to look at.

    For deviation nodes with a recovery, the correction frames follow the
    separator label and ride the dedicated field.
    """
    node.validate()
    key = (node.node_type, node.cause if node.node_type == NODE_SUBTASK else None)
    lines = [f"Key event: {_EVENT_PHRASES[key]}."]
    if node.room_transition is not None:
        frm = node.room_transition[0] or "an unlabeled area"
        lines.append(f"Room transition: {frm} -> {node.room_transition[1]}.")
    room = _node_room(node)
    lines.append(f"Current room: {room if room is not None else 'an unlabeled area'}.")
    lines.append(f"Estimated progress: {node.progress * 100.0:.1f}%.")
    if node.node_type == NODE_STOP_ERROR:
        if node.ne_unreachable:
            lines.append("Final navigation error: the goal is unreachable from here.")
        else:
            lines.append(f"Final navigation error: {node.ne:.2f} m.")
    if node.context_frames:
        seen = node.context_frames[-1].visible_landmarks
        if seen:
            lines.append(f"Visible landmarks: {', '.join(seen)}.")
    lines.append(f"Context frames: {len(node.context_frames)}.")
    if node.correction_frames:
        lines.append(
            f"{CORRECTION_SEPARATOR} {len(node.correction_frames)} recovery frames follow."
        )
    lines.append(
        "Describe this moment as three labeled lines: "
        '"Scene:", "Progress:", "Plan:".'
    )
    turn = ConversationTurn(
        role="user",
        text="\n".join(lines),
        frames=node.context_frames,
        correction_frames=node.correction_frames,
    )
    turn.validate()
    return turn


@runtime_checkable
class ReasonerBackend(Protocol):
    """Text completion over a conversation."""

    shareable: bool

    def complete(self, turns: Sequence[ConversationTurn]) -> str: ...


_RE_EVENT = re.compile(r"Key event: ([^.\n]+)\.")
_RE_ROOM = re.compile(r"Current room: ([^.\n]+)\.")
_RE_PROGRESS = re.compile(r"Estimated progress: ([-0-9.]+%)\.")
_RE_TRANSITION = re.compile(r"Room transition: ([^.\n]+) -> ([^.\n]+)\.")
_RE_LANDMARKS = re.compile(r"Visible landmarks: ([^.\n]+)\.")

_MOCK_PLANS = {
    "subtask completion (room change)": "Carry on through this room toward the next one on the route.",
    "subtask completion (correction finished)": "Back on the route; resume following the planned waypoints.",
    "path deviation": "Turn back toward the route and rejoin the waypoint line.",
    "stopping error": "This run ended off target; the stop should have come nearer the goal.",
}


class MockReasonerBackend:
    """Deterministic template reasoner.

    A pure function of the conversation text: it reads the node turn's
    labeled lines and folds them into a well-formed triplet, so supervision
    runs end-to-end without a model in the loop and the output is stable
    for tests.
    """

    shareable = True

    def complete(self, turns: Sequence[ConversationTurn]) -> str:
        if not turns:
            raise ValueError("empty conversation")
        node_text = turns[-1].text
        event = self._search(_RE_EVENT, node_text) or "an unlabeled event"
        room = self._search(_RE_ROOM, node_text) or "an unlabeled area"
        progress = self._search(_RE_PROGRESS, node_text) or "an unknown share"
        scene = f"The agent is in {self._with_article(room)}"
        m = _RE_TRANSITION.search(node_text)
        if m:
            scene += f", having come from {self._with_article(m.group(1))}"
        m = _RE_LANDMARKS.search(node_text)
        if m:
            scene += f"; in view: {m.group(1)}"
        scene += f". Event: {event}."
        progress_line = f"About {progress} of the route is behind the agent."
        plan = _MOCK_PLANS.get(event, "Keep following the instruction.")
        return (
            f"{SCENE_HEADING} {scene}\n"
            f"{PROGRESS_HEADING} {progress_line}\n"
            f"{PLAN_HEADING} {plan}"
        )

    @staticmethod
    def _search(rx: re.Pattern, text: str) -> str | None:
        m = rx.search(text)
        return m.group(1) if m else None

    @staticmethod
    def _with_article(room: str) -> str:
        return room if room.startswith("an ") or room.startswith("the ") else f"the {room}"


def generate_reasoning(
    backend: ReasonerBackend,
    turns: Sequence[ConversationTurn],
    retries: int = TRIPLET_RETRIES,
) -> ReasoningTriplet:
    """Query the reasoner and parse its triplet, re-asking on bad format.

    Each retry appends a format reminder turn so the service sees what went
    wrong.  Transport-level errors propagate from the backend untouched;
    this loop only handles malformed text.
    """
    if retries < 0:
        raise ValueError(f"retries={retries} must be non-negative")
    convo = list(turns)
    attempts = 0
    while True:
        text = backend.complete(convo)
        attempts += 1
        try:
            return parse_triplet(text)
        except (ValidationError, ValueError) as exc:
            if attempts > retries:
                raise TripletFormatError(text, attempts) from exc
            log.debug("triplet parse failed (attempt %d): %s", attempts, exc)
            convo = convo + [ConversationTurn(role="user", text=FORMAT_REMINDER)]


@dataclass(frozen=True)
class TrainingSample:
    """One supervised step: fused context in, reasoning or a command out."""

    episode_id: str
    t: int
    mode: str
    instruction: str
    fused_context: str
    frame_refs: tuple[int, ...]
    target: str

    def validate(self) -> None:
        if self.mode not in (MODE_REASON, MODE_ACT):
            raise ValidationError(f"sample mode {self.mode!r} is not a known mode")
        if self.t < 0:
            raise ValidationError(f"sample t={self.t} is negative")
        if not self.frame_refs:
            raise ValidationError("sample has no frame references")
        if any(r < 0 or r > self.t for r in self.frame_refs):
            raise ValidationError("frame references reach outside the history")
        if not self.target:
            raise ValidationError("sample target is empty")

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "mode": self.mode,
            "instruction": self.instruction,
            "fused_context": self.fused_context,
            "frame_refs": list(self.frame_refs),
            "target": self.target,
        }

    @staticmethod
    def from_json(obj: dict, episode_id: str) -> "TrainingSample":
        try:
            sample = TrainingSample(
                episode_id=episode_id,
                t=int(obj["t"]),
                mode=str(obj["mode"]),
                instruction=str(obj["instruction"]),
                fused_context=str(obj["fused_context"]),
                frame_refs=tuple(int(r) for r in obj["frame_refs"]),
                target=str(obj["target"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad training sample: {exc}") from exc
        sample.validate()
        return sample


def emit_training_samples(
    traj: Trajectory,
    nodes: Sequence[KeyNode],
    triplets: Sequence[ReasoningTriplet],
    episode: Episode,
    frames_k: int = 8,
) -> list[TrainingSample]:
    """Interleave reasoning and acting supervision over one trajectory.

    Node steps emit a reasoning sample whose context still carries the
    previous reasoning state; the rendered triplet then becomes the state
    for everything after.  Between nodes, runs of one repeated primitive
    collapse into a single acting sample targeting the aggregated command.
    Marker records (from rollout trajectories) emit nothing.
    """
    if len(nodes) != len(triplets):
        raise EmissionError(
            f"{len(nodes)} nodes but {len(triplets)} triplets for {traj.episode_id}"
        )
    by_step: dict[int, list[tuple[KeyNode, ReasoningTriplet]]] = {}
    for node, triplet in sorted(
        zip(nodes, triplets), key=lambda pair: pair[0].sort_key()
    ):
        if not (0 <= node.step < len(traj.steps)):
            raise EmissionError(f"node step {node.step} outside trajectory")
        by_step.setdefault(node.step, []).append((node, triplet))

    samples: list[TrainingSample] = []
    reasoning = INITIAL_REASONING
    t_prev = 0
    steps = traj.steps
    n = len(steps)
    i = 0
    while i < n:
        hits = by_step.get(i)
        if hits:
            for node, triplet in hits:
                rendered = render_triplet(triplet)
                samples.append(
                    TrainingSample(
                        episode_id=traj.episode_id,
                        t=i,
                        mode=MODE_REASON,
                        instruction=episode.instruction,
                        fused_context=fuse_reasoning_context(reasoning, i, t_prev),
                        frame_refs=tuple(sample_frames(list(range(i + 1)), frames_k)),
                        target=rendered,
                    )
                )
                reasoning = rendered
                t_prev = i
            i += 1
            continue
        action = steps[i].action
        if isinstance(action, StepMarker):
            i += 1
            continue
        j = i
        while (
            j + 1 < n
            and (j + 1) not in by_step
            and steps[j + 1].action is action
        ):
            j += 1
        samples.append(
            TrainingSample(
                episode_id=traj.episode_id,
                t=i,
                mode=MODE_ACT,
                instruction=episode.instruction,
                fused_context=fuse_reasoning_context(reasoning, i, t_prev),
                frame_refs=tuple(sample_frames(list(range(i + 1)), frames_k)),
                target=render_command([action] * (j - i + 1)),
            )
        )
        i = j + 1
    for s in samples:
        s.validate()
    return samples


def samples_to_jsonl(episode_id: str, samples: Sequence[TrainingSample]) -> str:
    header = {
        "schema": SCHEMA_VERSION,
        "kind": "training-samples",
        "episode_id": episode_id,
    }
    lines = [dumps_compact(header)]
    lines.extend(dumps_compact(s.to_json()) for s in samples)
    return "\n".join(lines) + "\n"


def samples_from_jsonl(text: str) -> tuple[str, list[TrainingSample]]:
    import json

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SchemaError("empty sample file")
    try:
        header = json.loads(lines[0])
    except ValueError as exc:
        raise SchemaError(f"bad sample file header: {exc}") from exc
    if header.get("kind") != "training-samples":
        raise SchemaError(f"not a sample file: kind={header.get('kind')!r}")
    if header.get("schema") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema {header.get('schema')!r}")
    episode_id = str(header.get("episode_id", ""))
    samples = []
    for ln in lines[1:]:
        try:
            obj = json.loads(ln)
        except ValueError as exc:
            raise SchemaError(f"bad sample line: {exc}") from exc
        samples.append(TrainingSample.from_json(obj, episode_id))
    return episode_id, samples
