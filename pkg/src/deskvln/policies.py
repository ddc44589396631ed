"""Decision backends for the rollout loop: a scripted route follower, a
seeded random walker, and a recorded-decision replayer.  The remote backend
lives in remote.py next to its wire client."""

from __future__ import annotations

import random
from typing import Sequence

from .engine import RouteFollower
from .errors import SchemaError
from .orchestrator import ObservationFrame, PolicyDecision, render_command
from .world import Episode, SceneWorld


class ScriptedExpertBackend:
    """Walks the episode's reference waypoints and speaks the grammar.

    Wraps the collection-side route follower, so the rollout loop and the
    demonstration collectors steer with the same logic.  Keeps follower
    state per instance, so it serves exactly one rollout.
    """

    shareable = False

    def __init__(
        self,
        world: SceneWorld,
        episode: Episode,
        waypoint_tolerance_m: float = 0.25,
    ) -> None:
        self._follower = RouteFollower(
            world, episode.gt_waypoints, waypoint_tolerance_m=waypoint_tolerance_m
        )

    def decide(
        self,
        instruction: str,
        fused_context: str,
        frames: Sequence[ObservationFrame],
    ) -> PolicyDecision:
        pose = frames[-1].pose
        self._follower.observe(pose)
        if self._follower.done():
            return PolicyDecision(d_reason=0.0, d_act=1.0, text="stop")
        prim = self._follower.decide(pose)
        return PolicyDecision(d_reason=0.0, d_act=1.0, text=render_command([prim]))


_RANDOM_CHATTER = (
    "wiggle toward the lamp",
    "proceed with caution",
    "take the scenic route",
)


class RandomWalkBackend:
    """Seeded noise source: mixes valid commands, malformed text, reasoning
    cycles, and occasional tied logits.  Used to stress the loop."""

    shareable = False

    def __init__(
        self,
        seed: int,
        reason_probability: float = 0.15,
        stop_probability: float = 0.03,
        malformed_probability: float = 0.08,
        tie_probability: float = 0.05,
    ) -> None:
        self._rng = random.Random(seed)
        self._p_reason = reason_probability
        self._p_stop = stop_probability
        self._p_malformed = malformed_probability
        self._p_tie = tie_probability
        self._cycle = 0

    def decide(
        self,
        instruction: str,
        fused_context: str,
        frames: Sequence[ObservationFrame],
    ) -> PolicyDecision:
        rng = self._rng
        self._cycle += 1
        roll = rng.random()
        if roll < self._p_tie:
            v = rng.uniform(0.0, 1.0)
            return PolicyDecision(v, v, self._random_command(rng))
        if roll < self._p_tie + self._p_reason:
            text = f"surveyed the area on cycle {self._cycle}; pressing on"
            return PolicyDecision(rng.uniform(0.6, 1.0), rng.uniform(0.0, 0.4), text)
        d_act = rng.uniform(0.6, 1.0)
        d_reason = rng.uniform(0.0, 0.4)
        if rng.random() < self._p_malformed:
            return PolicyDecision(d_reason, d_act, rng.choice(_RANDOM_CHATTER))
        if rng.random() < self._p_stop:
            return PolicyDecision(d_reason, d_act, "stop")
        return PolicyDecision(d_reason, d_act, self._random_command(rng))

    @staticmethod
    def _random_command(rng: random.Random) -> str:
        kind = rng.random()
        if kind < 0.5:
            return f"move forward {25 * rng.randint(1, 6)} cm"
        side = "left" if kind < 0.75 else "right"
        return f"turn {side} {15 * rng.randint(1, 6)} degrees"


class ReplayBackend:
    """Feeds back a recorded decision stream, one decision per cycle.

    Exhaustion raises, which the rollout loop reports as an incomplete
    trajectory; a replay that ends before its episode stops is a bug worth
    surfacing, not padding over.
    """

    shareable = False

    def __init__(self, decisions: Sequence[PolicyDecision]) -> None:
        self._decisions = list(decisions)
        self._next = 0

    def decide(
        self,
        instruction: str,
        fused_context: str,
        frames: Sequence[ObservationFrame],
    ) -> PolicyDecision:
        if self._next >= len(self._decisions):
            raise RuntimeError(f"replay exhausted after {self._next} decisions")
        decision = self._decisions[self._next]
        self._next += 1
        return decision


def load_decisions(text: str) -> list[PolicyDecision]:
    """Parse a decision stream from JSONL text (one decision per line)."""
    import json

    out: list[PolicyDecision] = []
    for i, ln in enumerate(text.splitlines()):
        if not ln.strip():
            continue
        try:
            obj = json.loads(ln)
        except ValueError as exc:
            raise SchemaError(f"decisions line {i}: {exc}") from exc
        out.append(PolicyDecision.from_json(obj))
    return out


def dump_decisions(decisions: Sequence[PolicyDecision]) -> str:
    from .serde import dumps_compact

    return "\n".join(dumps_compact(d.to_json()) for d in decisions) + "\n"
