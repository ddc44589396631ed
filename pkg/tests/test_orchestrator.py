import math

import pytest
from hypothesis import given, strategies as st

from deskvln.errors import CommandParseError
from deskvln.kinematics import (
    MODE_ACT,
    MODE_REASON,
    ActionPrimitive,
    Pose,
    StepMarker,
    path_length,
)
from deskvln.orchestrator import (
    EVENT_BACKEND_ERROR,
    EVENT_PARSE_ERROR,
    EVENT_REASON,
    INITIAL_REASONING,
    FOVConfig,
    PolicyDecision,
    ReasoningLog,
    RolloutConfig,
    decide_mode,
    fuse_reasoning_context,
    make_frame,
    parse_action_text,
    render_command,
    run_rollout,
    sample_frames,
    visible_landmarks,
)
from deskvln.policies import ScriptedExpertBackend
from deskvln.world import Landmark, SceneWorld
from conftest import make_corridor_episode, make_corridor_world


# -- context fusion ---------------------------------------------------------


def test_fuse_produces_the_exact_marker():
    assert (
        fuse_reasoning_context("Head for the door.", 7, 3)
        == "Head for the door. [steps_since_reasoning=4]"
    )
    assert fuse_reasoning_context(INITIAL_REASONING, 0, 0) == "None [steps_since_reasoning=0]"


def test_fuse_rejects_future_reasoning():
    with pytest.raises(ValueError):
        fuse_reasoning_context("x", 2, 3)


# -- frame sampling ---------------------------------------------------------


def test_sample_frames_small_buffers():
    assert sample_frames([10, 20], 5) == [10, 20]
    assert sample_frames([10, 20, 30], 3) == [10, 20, 30]
    assert sample_frames([10, 20, 30], 1) == [10]


def test_sample_frames_rounds_half_away():
    # k=3 over 4 frames lands on fractional index 1.5, which rounds up
    assert sample_frames([0, 1, 2, 3], 3) == [0, 2, 3]


def test_sample_frames_spans_the_buffer():
    frames = list(range(100))
    out = sample_frames(frames, 8)
    assert len(out) == 8
    assert out[0] == 0 and out[-1] == 99
    assert out == sorted(out)


def test_sample_frames_rejects_bad_input():
    with pytest.raises(ValueError):
        sample_frames([], 4)
    with pytest.raises(ValueError):
        sample_frames([1], 0)


@given(st.integers(min_value=1, max_value=200), st.integers(min_value=1, max_value=32))
def test_sample_frames_size_and_order(n, k):
    out = sample_frames(list(range(n)), k)
    assert len(out) == min(n, k)
    assert out == sorted(out)
    assert out[0] == 0
    assert out[-1] == n - 1 if k > 1 or n == 1 else True


# -- mode arbitration -------------------------------------------------------


def test_decide_mode_is_strict():
    assert decide_mode(1.0, 0.0) == MODE_REASON
    assert decide_mode(0.0, 1.0) == MODE_ACT
    assert decide_mode(0.5, 0.5) == MODE_ACT  # ties act
    with pytest.raises(ValueError):
        decide_mode(float("nan"), 0.0)
    with pytest.raises(ValueError):
        decide_mode(0.0, float("inf"))


# -- command grammar --------------------------------------------------------


def test_parse_basic_commands():
    assert parse_action_text("stop") == [ActionPrimitive.STOP]
    assert parse_action_text(" Stop. ") == [ActionPrimitive.STOP]
    assert parse_action_text("move forward 75 cm") == [ActionPrimitive.FORWARD] * 3
    assert parse_action_text("move forward 1 m") == [ActionPrimitive.FORWARD] * 4
    assert parse_action_text("turn left 45 degrees") == [ActionPrimitive.TURN_LEFT] * 3
    assert parse_action_text("Turn Right 15 Degrees.") == [ActionPrimitive.TURN_RIGHT]


def test_parse_quantizes_with_a_floor_of_one():
    assert parse_action_text("move forward 10 cm") == [ActionPrimitive.FORWARD]
    assert parse_action_text("move forward 0 cm") == [ActionPrimitive.FORWARD]
    assert parse_action_text("move forward 37.5 cm") == [ActionPrimitive.FORWARD] * 2
    assert parse_action_text("turn left 7 degrees") == [ActionPrimitive.TURN_LEFT]
    assert parse_action_text("turn right 22.5 degrees") == [ActionPrimitive.TURN_RIGHT] * 2


def test_parse_rejects_off_grammar_text():
    for bad in [
        "",
        "walk forward 25 cm",
        "move forward cm",
        "move forward -25 cm",
        "turn around 30 degrees",
        "turn left 30",
        "stop now",
        "move forward 25 cm and stop",
    ]:
        with pytest.raises(CommandParseError):
            parse_action_text(bad)


def test_render_command_formats():
    assert render_command([ActionPrimitive.STOP]) == "stop"
    assert render_command([ActionPrimitive.FORWARD] * 3) == "move forward 75 cm"
    assert render_command([ActionPrimitive.TURN_LEFT]) == "turn left 15 degrees"
    assert render_command([ActionPrimitive.TURN_RIGHT] * 2) == "turn right 30 degrees"


def test_render_command_rejects_mixed_runs():
    with pytest.raises(ValueError):
        render_command([])
    with pytest.raises(ValueError):
        render_command([ActionPrimitive.FORWARD, ActionPrimitive.TURN_LEFT])
    with pytest.raises(ValueError):
        render_command([ActionPrimitive.STOP, ActionPrimitive.STOP])


@given(
    st.sampled_from(
        [ActionPrimitive.FORWARD, ActionPrimitive.TURN_LEFT, ActionPrimitive.TURN_RIGHT]
    ),
    st.integers(min_value=1, max_value=24),
)
def test_render_parse_round_trip(prim, n):
    run = [prim] * n
    assert parse_action_text(render_command(run)) == run


def test_stop_round_trips():
    assert parse_action_text(render_command([ActionPrimitive.STOP])) == [ActionPrimitive.STOP]


# -- visibility -------------------------------------------------------------


def test_visible_landmarks_range_is_inclusive():
    world = make_corridor_world()  # lamp at (5.3, 1.0)
    fov = FOVConfig(radius_m=3.0, half_angle_deg=60.0)
    assert visible_landmarks(world, Pose(2.3, 1.0, 0.0), fov) == ("lamp",)
    assert visible_landmarks(world, Pose(2.29, 1.0, 0.0), fov) == ()


def test_visible_landmarks_respects_heading():
    world = make_corridor_world()
    fov = FOVConfig(radius_m=3.0, half_angle_deg=60.0)
    assert visible_landmarks(world, Pose(4.8, 1.0, 180.0), fov) == ()
    # bearing to the lamp is 0; a heading of 300 puts it exactly on the edge
    assert visible_landmarks(world, Pose(4.8, 1.0, 300.0), fov) == ("lamp",)
    assert visible_landmarks(world, Pose(4.8, 1.0, 299.0), fov) == ()


def test_visible_landmarks_sorted_by_distance_then_id():
    world = make_corridor_world()
    lms = (
        Landmark(landmark_id="b", category="desk", x=2.0, y=1.2),
        Landmark(landmark_id="a", category="sofa", x=2.0, y=0.8),
        Landmark(landmark_id="c", category="lamp", x=1.6, y=1.0),
    )
    w2 = SceneWorld(
        width=world.width,
        height=world.height,
        grid_resolution=world.grid_resolution,
        occupancy=world.occupancy,
        rooms=world.rooms,
        landmarks=lms,
    )
    fov = FOVConfig(radius_m=3.0, half_angle_deg=90.0)
    assert visible_landmarks(w2, Pose(1.2, 1.0, 0.0), fov) == ("c", "a", "b")


def test_zero_distance_landmark_is_always_visible():
    world = make_corridor_world()
    lms = (Landmark(landmark_id="here", category="desk", x=1.0, y=1.0),)
    w2 = SceneWorld(
        width=world.width,
        height=world.height,
        grid_resolution=world.grid_resolution,
        occupancy=world.occupancy,
        rooms=world.rooms,
        landmarks=lms,
    )
    fov = FOVConfig(radius_m=3.0, half_angle_deg=10.0)
    assert visible_landmarks(w2, Pose(1.0, 1.0, 217.0), fov) == ("here",)


def test_make_frame_fills_room_and_counter():
    world = make_corridor_world()
    frame = make_frame(world, Pose(1.0, 1.0, 0.0), 5, 2, FOVConfig())
    assert frame.room == "studio"
    assert frame.steps_since_reasoning == 3
    with pytest.raises(ValueError):
        make_frame(world, Pose(1.0, 1.0, 0.0), 1, 2, FOVConfig())


# -- rollouts ---------------------------------------------------------------


class SequenceBackend:
    """Replays a fixed list of decisions; raises when it runs dry."""

    shareable = False

    def __init__(self, decisions):
        self._pending = list(decisions)
        self.calls = []

    def decide(self, instruction, fused_context, frames):
        self.calls.append((instruction, fused_context, [f.t for f in frames]))
        if not self._pending:
            raise RuntimeError("sequence backend exhausted")
        return self._pending.pop(0)


def reason(text):
    return PolicyDecision(d_reason=1.0, d_act=0.0, text=text)


def act(text):
    return PolicyDecision(d_reason=0.0, d_act=1.0, text=text)


def test_rollout_scripted_expert_reaches_the_goal():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = ScriptedExpertBackend(world, episode)
    traj, log = run_rollout(world, episode, backend)
    traj.validate()
    assert traj.terminated_by == "stop"
    last = traj.steps[-1]
    assert last.action is ActionPrimitive.STOP
    assert math.hypot(last.pose_after.x - episode.goal[0], last.pose_after.y - episode.goal[1]) < 0.3
    assert log.episode_id == episode.episode_id


def test_rollout_reason_cycle_is_stationary_and_logged():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([
        reason("Scan the room first."),
        act("move forward 50 cm"),
        act("stop"),
    ])
    traj, log = run_rollout(world, episode, backend)
    marker = traj.steps[0]
    assert marker.action is StepMarker.REASON
    assert marker.mode == MODE_REASON
    assert marker.pose_after == marker.pose_before
    kinds = [e.kind for e in log.events]
    assert kinds == [EVENT_REASON]
    assert log.events[0].text == "Scan the room first."
    # fused context on the cycle after reasoning carries the fresh text
    assert backend.calls[1][1] == "Scan the room first. [steps_since_reasoning=1]"
    # and the cycle before it still carried the initial placeholder
    assert backend.calls[0][1] == "None [steps_since_reasoning=0]"


def test_rollout_act_cycle_appends_one_record_per_primitive():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([act("move forward 75 cm"), act("stop")])
    traj, _log = run_rollout(world, episode, backend)
    actions = [s.action for s in traj.steps]
    assert actions == [ActionPrimitive.FORWARD] * 3 + [ActionPrimitive.STOP]
    assert path_length(traj) == pytest.approx(0.75)


def test_rollout_malformed_command_becomes_a_noop_record():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([act("shuffle left a bit"), act("stop")])
    traj, log = run_rollout(world, episode, backend)
    noop = traj.steps[0]
    assert noop.action is StepMarker.NOOP
    assert noop.mode == MODE_ACT
    assert noop.pose_after == noop.pose_before
    assert [e.kind for e in log.events] == [EVENT_PARSE_ERROR]
    assert "shuffle left a bit" in log.events[0].text
    assert traj.terminated_by == "stop"


def test_rollout_backend_exception_flags_incomplete():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([act("move forward 25 cm")])  # second call raises
    traj, log = run_rollout(world, episode, backend)
    assert traj.terminated_by == "incomplete"
    assert len(traj.steps) == 1
    assert [e.kind for e in log.events] == [EVENT_BACKEND_ERROR]


def test_rollout_step_budget_terminates():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([act("turn left 15 degrees") for _ in range(100)])
    cfg = RolloutConfig(step_budget=4)
    traj, _log = run_rollout(world, episode, backend, cfg)
    assert traj.terminated_by == "step-budget"
    assert len(traj.steps) == 4


def test_rollout_observer_sees_a_growing_frame_buffer():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([
        act("move forward 25 cm"),
        reason("Still heading east."),
        act("move forward 25 cm"),
        act("stop"),
    ])
    seen = []

    def observer(state, decision, mode):
        seen.append((state.t, state.t_prev, len(state.frames), mode))
        assert len(state.frames) == state.t + 1

    _traj, _log = run_rollout(world, episode, backend, observer=observer)
    assert [s[0] for s in seen] == [0, 1, 2, 3]
    # t_prev snaps to the reasoning cycle and holds
    assert [s[1] for s in seen] == [0, 0, 1, 1]
    assert [s[3] for s in seen] == [MODE_ACT, MODE_REASON, MODE_ACT, MODE_ACT]


def test_rollout_backend_sees_at_most_k_frames():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    decisions = [act("turn left 15 degrees") for _ in range(12)] + [act("stop")]
    backend = SequenceBackend(decisions)
    cfg = RolloutConfig(frames_k=4)
    run_rollout(world, episode, backend, cfg)
    for _instruction, _fused, ts in backend.calls:
        assert len(ts) <= 4
        assert ts == sorted(ts)
    # late calls span the whole buffer: first frame kept, newest frame last
    assert backend.calls[-1][2][0] == 0
    assert backend.calls[-1][2][-1] == len(backend.calls) - 1


def test_reasoning_log_jsonl_round_trip():
    world = make_corridor_world()
    episode = make_corridor_episode(world)
    backend = SequenceBackend([
        reason("First look around."),
        act("bogus command"),
        act("stop"),
    ])
    _traj, log = run_rollout(world, episode, backend)
    text = log.to_jsonl()
    back = ReasoningLog.from_jsonl(text)
    assert back == log
    assert back.to_jsonl() == text
